#include "probekit/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "probekit/errors.hpp"
#include "probekit/random.hpp"
#include "probekit/text.hpp"

namespace probekit::gateway {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

void ChatRequest::validate() const {
  if (messages.empty()) throw ValidationError("chat request has no messages");
  for (std::size_t i = 1; i < messages.size(); ++i) {
    if (messages[i].role == Role::System) {
      throw ValidationError("system message must come first");
    }
  }
}

Json ChatRequest::to_json() const {
  Json msgs = Json::array();
  for (const auto& m : messages) {
    msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  Json j{{"model", model}, {"messages", msgs}, {"temperature", temperature},
         {"max_tokens", max_tokens}};
  if (seed) j["seed"] = *seed;
  return j;
}

const std::string& ChatRequest::last_user_content() const {
  static const std::string empty;
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::User) return it->content;
  }
  return empty;
}

namespace {

// nlohmann::json (unordered variant) keeps object keys sorted, which is the
// canonical form used for digests.
std::string canonical(const Json& j) { return nlohmann::json::parse(j.dump()).dump(); }

}  // namespace

std::string request_digest(const ChatRequest& request) {
  return text::sha256_hex(canonical(request.to_json()));
}

std::string embed_digest(const std::string& model, const std::string& input) {
  return text::sha256_hex(canonical(Json{{"model", model}, {"input", input}}));
}

// ---------------------------------------------------------------------------
// HttpBackend

HttpBackend::HttpBackend(HttpOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("http backend needs a base URL");
  if (options_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

std::vector<AttemptRecord> HttpBackend::attempt_log() const {
  std::lock_guard lock(log_mutex_);
  return attempts_;
}

std::string HttpBackend::post_with_retry(const std::string& path, const std::string& body) {
  httplib::Client client(options_.base_url);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  client.set_write_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  }

  Rng jitter(mix_seed(options_.jitter_seed, jitter_counter_.fetch_add(1)));
  std::string last_error;
  for (int attempt = 1; attempt <= options_.max_retries + 1; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    AttemptRecord rec{attempt, res ? res->status : 0, {}};
    bool retryable = false;
    if (!res) {
      rec.error = httplib::to_string(res.error());
      retryable = true;
    } else if (res->status == 429 || res->status >= 500) {
      rec.error = res->body;
      retryable = true;
    } else if (res->status < 200 || res->status >= 300) {
      rec.error = res->body;
    }
    {
      std::lock_guard lock(log_mutex_);
      attempts_.push_back(rec);
    }
    if (res && res->status >= 200 && res->status < 300) return res->body;
    last_error = rec.status ? "HTTP " + std::to_string(rec.status) + ": " + rec.error : rec.error;
    if (!retryable) break;
    if (attempt <= options_.max_retries) {
      const double scale = std::ldexp(1.0, attempt - 1) * (0.5 + jitter.uniform01());
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(
          static_cast<double>(options_.retry_base.count()) * scale));
    }
  }
  throw TransportError("request to " + path + " failed: " + last_error);
}

std::string HttpBackend::complete(const ChatRequest& request) {
  request.validate();
  const auto body = post_with_retry(options_.chat_path, request.to_json().dump());
  try {
    auto j = Json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed chat completion response: ") + e.what());
  }
}

std::vector<double> HttpBackend::embed(const std::string& input) {
  Json req{{"model", options_.embedding_model}, {"input", input}};
  const auto body = post_with_retry(options_.embed_path, req.dump());
  try {
    auto j = Json::parse(body);
    return j.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed embedding response: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// MockBackend

void MockBackend::add_rule(std::string name, Matcher matches, Responder respond) {
  rules_.push_back({std::move(name), std::move(matches), std::move(respond)});
}

void MockBackend::prepend_rule(std::string name, Matcher matches, Responder respond) {
  rules_.insert(rules_.begin(), {std::move(name), std::move(matches), std::move(respond)});
}

void MockBackend::add_rule(std::string name, std::string marker, Responder respond) {
  add_rule(
      std::move(name),
      [marker = std::move(marker)](const ChatRequest& r) {
        return text::contains(r.last_user_content(), marker);
      },
      std::move(respond));
}

std::string MockBackend::complete(const ChatRequest& request) {
  request.validate();
  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  for (const auto& rule : rules_) {
    if (rule.matches(request)) return rule.respond(request);
  }
  static const std::vector<std::string> canned{
      "Thanks for the question; the figures depend on the reporting period you look at.",
      "That trend mostly reflects changes in demand over the last few quarters.",
      "The short answer is that margins held steady while volumes grew.",
      "It is mainly driven by input costs and the pricing environment.",
  };
  std::string rendered;
  for (const auto& m : request.messages) {
    rendered += to_string(m.role);
    rendered += ':';
    rendered += m.content;
    rendered += '\n';
  }
  return canned[mix_seed(seed_, text::fnv1a(rendered)) % canned.size()];
}

std::vector<double> MockBackend::embed(const std::string& input) {
  // Sum of per-token pseudo-random directions, so texts sharing vocabulary end
  // up closer together. Carries no semantic meaning beyond that.
  std::vector<double> v(embedding_dim_, 0.0);
  auto add = [&](std::uint64_t h) {
    Rng rng(mix_seed(seed_, h));
    for (auto& x : v) x += 2.0 * rng.uniform01() - 1.0;
  };
  const auto tokens = text::content_tokens(input);
  if (tokens.empty()) {
    add(text::fnv1a(input));
  } else {
    for (const auto& t : tokens) add(text::fnv1a(t));
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

// ---------------------------------------------------------------------------
// Cassettes

std::vector<CassetteEntry> load_cassette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CassetteError("cannot open cassette " + path.string());
  std::vector<CassetteEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      auto j = Json::parse(line);
      out.push_back({j.at("digest").get<std::string>(), j.at("request"), j.at("response")});
    } catch (const nlohmann::json::exception& e) {
      throw CassetteError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

ReplayBackend::ReplayBackend(const std::filesystem::path& cassette)
    : ReplayBackend(load_cassette(cassette)) {}

ReplayBackend::ReplayBackend(std::vector<CassetteEntry> entries) {
  for (auto& e : entries) {
    if (e.request.contains("input") && e.request.contains("model") && !e.request.contains("messages")) {
      embedding_model_ = e.request["model"].get<std::string>();
    }
    responses_.emplace(std::move(e.digest), std::move(e.response));
  }
}

std::string ReplayBackend::complete(const ChatRequest& request) {
  const auto digest = request_digest(request);
  auto it = responses_.find(digest);
  if (it == responses_.end()) throw CassetteError("no cassette entry for request " + digest);
  return it->second.get<std::string>();
}

std::vector<double> ReplayBackend::embed(const std::string& input) {
  const auto digest = embed_digest(embedding_model_, input);
  auto it = responses_.find(digest);
  if (it == responses_.end()) throw CassetteError("no cassette entry for embedding " + digest);
  return it->second.get<std::vector<double>>();
}

RecordingBackend::RecordingBackend(std::unique_ptr<Backend> inner,
                                   const std::filesystem::path& cassette,
                                   std::string embedding_model)
    : inner_(std::move(inner)), cassette_(cassette), embedding_model_(std::move(embedding_model)) {}

void RecordingBackend::append(const CassetteEntry& entry) {
  Json line{{"digest", entry.digest}, {"request", entry.request}, {"response", entry.response}};
  std::lock_guard lock(mutex_);
  std::ofstream out(cassette_, std::ios::app);
  if (!out) throw IoError("cannot write cassette " + cassette_.string());
  out << line.dump() << '\n';
}

std::string RecordingBackend::complete(const ChatRequest& request) {
  auto reply = inner_->complete(request);
  append({request_digest(request), request.to_json(), reply});
  return reply;
}

std::vector<double> RecordingBackend::embed(const std::string& input) {
  auto v = inner_->embed(input);
  append({embed_digest(embedding_model_, input),
          Json{{"model", embedding_model_}, {"input", input}}, v});
  return v;
}

// ---------------------------------------------------------------------------
// Config and Gateway

std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Live: return "live";
    case BackendKind::Mock: return "mock";
    case BackendKind::Replay: return "replay";
    case BackendKind::Record: return "record";
  }
  return "mock";
}

BackendKind backend_kind_from_string(std::string_view s) {
  const auto lower = text::to_lower(s);
  for (auto k : {BackendKind::Live, BackendKind::Mock, BackendKind::Replay, BackendKind::Record}) {
    if (to_string(k) == lower) return k;
  }
  throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

void BackendConfig::validate() const {
  if (concurrency == 0) throw ConfigError("backend concurrency must be >= 1");
  if (kind == BackendKind::Live || kind == BackendKind::Record) {
    if (base_url.empty()) throw ConfigError("live backend requires base_url");
    const char* key = std::getenv(credential_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("live backend requires the credential in environment variable " +
                        credential_env);
    }
  }
  if ((kind == BackendKind::Replay || kind == BackendKind::Record) && cassette.empty()) {
    throw ConfigError(std::string(to_string(kind)) + " backend requires a cassette path");
  }
}

Json BackendConfig::to_json() const {
  return Json{{"kind", to_string(kind)},
              {"base_url", base_url},
              {"model", model},
              {"embedding_model", embedding_model},
              {"credential_env", credential_env},
              {"timeout_ms", timeout.count()},
              {"max_retries", max_retries},
              {"retry_base_ms", retry_base.count()},
              {"concurrency", concurrency},
              {"cassette", cassette.string()},
              {"mock_seed", mock_seed}};
}

class Gateway::Slot {
 public:
  explicit Slot(Gateway& g) : g_(g) {
    g_.slots_.acquire();
    const auto now = g_.in_flight_.fetch_add(1) + 1;
    auto prev = g_.max_in_flight_.load();
    while (now > prev && !g_.max_in_flight_.compare_exchange_weak(prev, now)) {
    }
    g_.calls_.fetch_add(1);
  }
  ~Slot() {
    g_.in_flight_.fetch_sub(1);
    g_.slots_.release();
  }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  Gateway& g_;
};

Gateway::Gateway(std::unique_ptr<Backend> backend, std::size_t concurrency, std::string model)
    : backend_(std::move(backend)),
      concurrency_(concurrency),
      model_(std::move(model)),
      slots_(static_cast<std::ptrdiff_t>(concurrency)) {
  if (!backend_) throw ConfigError("gateway needs a backend");
  if (concurrency == 0) throw ConfigError("gateway concurrency must be >= 1");
}

std::string Gateway::complete(ChatRequest request) {
  if (request.model.empty()) request.model = model_;
  request.validate();
  Slot slot(*this);
  return backend_->complete(request);
}

std::vector<double> Gateway::embed(const std::string& input) {
  Slot slot(*this);
  return backend_->embed(input);
}

std::unique_ptr<Gateway> make_gateway(const BackendConfig& config,
                                      std::unique_ptr<Backend> mock_override) {
  auto http = [&] {
    config.validate();
    HttpOptions o;
    o.base_url = config.base_url;
    o.api_key = std::getenv(config.credential_env.c_str());
    o.embedding_model = config.embedding_model;
    o.timeout = config.timeout;
    o.max_retries = config.max_retries;
    o.retry_base = config.retry_base;
    return std::make_unique<HttpBackend>(std::move(o));
  };
  std::unique_ptr<Backend> backend;
  switch (config.kind) {
    case BackendKind::Live:
      backend = http();
      break;
    case BackendKind::Mock:
      backend = mock_override ? std::move(mock_override)
                              : std::make_unique<MockBackend>(config.mock_seed);
      break;
    case BackendKind::Replay:
      if (config.cassette.empty()) throw ConfigError("replay backend requires a cassette path");
      backend = std::make_unique<ReplayBackend>(config.cassette);
      break;
    case BackendKind::Record: {
      if (config.cassette.empty()) throw ConfigError("record backend requires a cassette path");
      // A supplied backend (typically a scripted mock) is recorded instead of
      // the live endpoint.
      auto inner = mock_override ? std::move(mock_override) : http();
      backend = std::make_unique<RecordingBackend>(std::move(inner), config.cassette,
                                                   config.embedding_model);
      break;
    }
  }
  return std::make_unique<Gateway>(std::move(backend), config.concurrency, config.model);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ValidationError("cosine needs two non-empty vectors of equal length");
  }
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) throw NumericError("cosine of a zero vector");
  return ab / std::sqrt(aa * bb);
}

}  // namespace probekit::gateway
