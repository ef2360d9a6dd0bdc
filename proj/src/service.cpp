#include "probekit/service.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <regex>

#include <httplib.h>

#include "probekit/errors.hpp"
#include "probekit/random.hpp"
#include "probekit/text.hpp"

namespace probekit::service {

namespace fs = std::filesystem;

Json to_json(const Rating& r) {
  Json flags = Json::array();
  for (const auto& f : r.probe_flags) {
    if (f) {
      flags.push_back(*f);
    } else {
      flags.push_back(nullptr);
    }
  }
  return Json{{"pc", r.pc}, {"ous", r.ous}, {"probe_flags", flags}};
}

Rating rating_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("rating must be a JSON object");
  Rating r;
  for (const char* key : {"pc", "ous"}) {
    if (!j.contains(key) || !j.at(key).is_number_integer()) {
      throw ValidationError(std::string("rating field '") + key + "' must be an integer");
    }
    const int v = j.at(key).get<int>();
    if (v < 1 || v > 5) {
      throw ValidationError(std::string("rating field '") + key + "' must be in 1..5, got " +
                            std::to_string(v));
    }
    (std::string_view(key) == "pc" ? r.pc : r.ous) = v;
  }
  if (j.contains("probe_flags")) {
    const auto& flags = j.at("probe_flags");
    if (!flags.is_array()) throw ValidationError("probe_flags must be an array");
    for (const auto& f : flags) {
      if (f.is_null()) {
        r.probe_flags.emplace_back(std::nullopt);
      } else if (f.is_boolean()) {
        r.probe_flags.emplace_back(f.get<bool>());
      } else {
        throw ValidationError("probe_flags entries must be true, false or null");
      }
    }
  }
  return r;
}

Json to_json(const SessionRecord& r) {
  Json verdicts = Json::array();
  for (const auto& v : r.verdicts) verdicts.push_back(eval::to_json(v));
  return Json{{"id", r.session.id},
              {"agent", r.agent},
              {"pair_id", r.pair_id},
              {"human", r.human},
              {"session", probekit::to_json(r.session)},
              {"verdicts", verdicts},
              {"metrics", r.metrics ? eval::to_json(*r.metrics) : Json(nullptr)},
              {"rating", r.rating ? to_json(*r.rating) : Json(nullptr)}};
}

SessionRecord record_from_json(const Json& j) {
  SessionRecord r;
  r.session = session_from_json(j.at("session"));
  r.agent = j.at("agent").get<std::string>();
  r.pair_id = j.at("pair_id").get<std::string>();
  r.human = j.value("human", true);
  for (const auto& v : j.at("verdicts")) r.verdicts.push_back(eval::verdict_from_json(v));
  if (!j.at("metrics").is_null()) r.metrics = eval::metrics_from_json(j.at("metrics"));
  if (!j.at("rating").is_null()) r.rating = rating_from_json(j.at("rating"));
  return r;
}

SessionStore::SessionStore(fs::path path) : path_(std::move(path)) {
  if (!fs::exists(path_)) return;
  std::ifstream in(path_);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      auto rec = record_from_json(Json::parse(line));
      index_[rec.session.id] = std::move(rec);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path_.string() + ": line " + std::to_string(n) + ": " + e.what(), line);
    }
  }
}

void SessionStore::put(const SessionRecord& record) {
  const auto line = to_json(record).dump() + "\n";
  std::lock_guard lock(mu_);
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to session store " + path_.string());
  out << line;
  out.flush();
  if (!out) throw IoError("failed writing session store " + path_.string());
  index_[record.session.id] = record;
}

std::optional<SessionRecord> SessionStore::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<SessionRecord> SessionStore::all() const {
  std::lock_guard lock(mu_);
  std::vector<SessionRecord> out;
  for (const auto& [id, r] : index_) out.push_back(r);
  return out;
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

namespace {

Response error(int status, const std::string& msg) { return {status, Json{{"error", msg}}}; }

Json parse_body(const std::string& body) {
  try {
    auto j = Json::parse(body.empty() ? "{}" : body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed JSON body: ") + e.what());
  }
}

}  // namespace

SessionService::SessionService(pipeline::RunConfig config, gateway::Gateway& gateway)
    : config_(std::move(config)),
      gateway_(gateway),
      store_(pipeline::paths_for(config_).root / "sessions.jsonl") {
  for (auto& p : pipeline::load_or_make_pairs(config_, {})) pairs_[p.id] = p;
  next_id_ = store_.size() + 1;
}

std::mutex& SessionService::session_mutex(const std::string& id) {
  std::lock_guard lock(mu_);
  auto& m = session_mutexes_[id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

const policy::PolicyParams& SessionService::policy() {
  std::lock_guard lock(mu_);
  if (!policy_) policy_ = pipeline::resolve_policy(config_);
  return *policy_;
}

Response SessionService::create_session(const Json& body) {
  if (!body.contains("agent") || !body.at("agent").is_string()) {
    return error(400, "field 'agent' (string) is required");
  }
  if (!body.contains("pair_id") || !body.at("pair_id").is_string()) {
    return error(400, "field 'pair_id' (string) is required");
  }
  const auto kind = agents::agent_kind_from_string(body.at("agent").get<std::string>());
  const auto pair_id = body.at("pair_id").get<std::string>();
  auto it = pairs_.find(pair_id);
  if (it == pairs_.end()) return error(404, "unknown pair '" + pair_id + "'");
  if (kind == agents::AgentKind::ProChatIp && !config_.remote_strategy) policy();

  std::string id;
  {
    std::lock_guard lock(mu_);
    std::ostringstream os;
    os << "session-" << std::setw(4) << std::setfill('0') << next_id_++;
    id = os.str();
  }
  SessionRecord rec;
  rec.session = open_session(id, corpus::to_target(it->second.target_item),
                             it->second.user_item.question, config_.train.max_turns);
  rec.agent = std::string(agents::to_string(kind));
  rec.pair_id = pair_id;
  store_.put(rec);
  return {201, Json{{"id", id}, {"session", to_json(rec)}}};
}

Response SessionService::post_message(const std::string& id, const Json& body) {
  if (!body.contains("text") || !body.at("text").is_string() ||
      text::trim(body.at("text").get<std::string>()).empty()) {
    return error(400, "field 'text' (non-empty string) is required");
  }
  std::lock_guard session_lock(session_mutex(id));
  auto rec = store_.get(id);
  if (!rec) return error(404, "unknown session '" + id + "'");
  if (rec->rating) return error(409, "session '" + id + "' is rated and locked");
  if (rec->session.status != SessionStatus::Active) {
    return error(409, "session '" + id + "' is " + std::string(to_string(rec->session.status)));
  }

  const auto kind = agents::agent_kind_from_string(rec->agent);
  const auto user = Utterance::user(body.at("text").get<std::string>());
  const auto history = history_with_pending(rec->session, user);
  const auto t = static_cast<std::uint64_t>(rec->session.turns.size() + 1);
  const auto seed = mix_seed(config_.seed, text::fnv1a(id));
  std::optional<Decision> decision;
  if (kind == agents::AgentKind::ProChatIp) {
    if (config_.remote_strategy) {
      agents::RemoteStrategy remote(gateway_);
      decision = remote.decide(history, rec->session.target, mix_seed(seed, t)).decision;
    } else {
      const auto features = policy::extract_features(history, rec->session.target);
      decision = policy::decide(policy(), features, policy::DecideMode::greedy()).decision;
    }
  }
  const auto out =
      agents::respond(kind, gateway_, history, rec->session.target, decision, mix_seed(seed, 1000 + t));
  const auto d = decision.value_or(out.strategy.value_or(Decision::Wait));
  rec->session = append_turn(std::move(rec->session), user, d, Utterance::agent(out.response_text));
  store_.put(*rec);
  return {200, Json{{"reply", out.response_text},
                    {"decision", to_string(d)},
                    {"turn", rec->session.turns.size()},
                    {"status", to_string(rec->session.status)},
                    {"session", to_json(*rec)}}};
}

Response SessionService::get_session(const std::string& id) {
  std::lock_guard session_lock(session_mutex(id));
  auto rec = store_.get(id);
  if (!rec) return error(404, "unknown session '" + id + "'");
  return {200, to_json(*rec)};
}

Response SessionService::post_rating(const std::string& id, const Json& body) {
  std::lock_guard session_lock(session_mutex(id));
  auto rec = store_.get(id);
  if (!rec) return error(404, "unknown session '" + id + "'");
  if (!rec->human) return error(409, "ratings are accepted only on human-mode sessions");
  if (rec->rating) return error(409, "session '" + id + "' is already rated");
  auto rating = rating_from_json(body);
  const auto n = rec->session.turns.size();
  if (rating.probe_flags.empty()) rating.probe_flags.resize(n);
  if (rating.probe_flags.size() != n) {
    return error(400, "probe_flags has " + std::to_string(rating.probe_flags.size()) +
                          " entries; session has " + std::to_string(n) + " turns");
  }
  rec->metrics = eval::human_session_metrics(rec->session, rating.probe_flags,
                                             static_cast<double>(rating.pc));
  rec->rating = std::move(rating);
  store_.put(*rec);
  return {200, to_json(*rec)};
}

Response SessionService::get_report() {
  std::map<std::string, std::vector<eval::SessionMetrics>> by_agent;
  std::map<std::string, std::vector<int>> ous_by_agent;
  int total = 0;
  for (const auto& r : store_.all()) {
    ++total;
    if (!r.metrics) continue;
    by_agent[r.agent].push_back(*r.metrics);
    if (r.rating) ous_by_agent[r.agent].push_back(r.rating->ous);
  }
  Json agents = Json::object();
  for (const auto& [agent, ms] : by_agent) {
    auto a = eval::to_json(eval::aggregate(ms));
    const auto& o = ous_by_agent[agent];
    if (!o.empty()) {
      double s = 0;
      for (int v : o) s += v;
      a["human_ous_mean"] = s / static_cast<double>(o.size());
    }
    agents[agent] = a;
  }
  return {200, Json{{"sessions", total}, {"agents", agents}}};
}

Response SessionService::route(const std::string& method, const std::string& path,
                               const std::string& body) {
  static const std::regex kSession(R"(^/sessions/([A-Za-z0-9_-]+)$)");
  static const std::regex kMessages(R"(^/sessions/([A-Za-z0-9_-]+)/messages$)");
  static const std::regex kRating(R"(^/sessions/([A-Za-z0-9_-]+)/rating$)");
  try {
    std::smatch m;
    if (path == "/sessions") {
      if (method != "POST") return error(405, "use POST /sessions");
      return create_session(parse_body(body));
    }
    if (path == "/report") {
      if (method != "GET") return error(405, "use GET /report");
      return get_report();
    }
    if (std::regex_match(path, m, kMessages)) {
      if (method != "POST") return error(405, "use POST " + path);
      return post_message(m[1], parse_body(body));
    }
    if (std::regex_match(path, m, kRating)) {
      if (method != "POST") return error(405, "use POST " + path);
      return post_rating(m[1], parse_body(body));
    }
    if (std::regex_match(path, m, kSession)) {
      if (method != "GET") return error(405, "use GET " + path);
      return get_session(m[1]);
    }
    return error(404, "no route for " + method + " " + path);
  } catch (const ValidationError& e) {
    return error(400, e.what());
  } catch (const ParseError& e) {
    return error(502, e.what());
  } catch (const ConfigError& e) {
    return error(409, e.what());
  } catch (const StateError& e) {
    return error(409, e.what());
  } catch (const TransportError& e) {
    return error(502, e.what());
  } catch (const Error& e) {
    return error(500, e.what());
  }
}

void SessionService::serve(const std::string& host, int port) {
  httplib::Server server;
  server_ = &server;
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = route(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get(R"(.*)", handler);
  server.Post(R"(.*)", handler);
  const bool ok = server.listen(host, port);
  server_ = nullptr;
  if (!ok) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

void SessionService::stop() {
  if (server_ != nullptr) static_cast<httplib::Server*>(server_.load())->stop();
}

}  // namespace probekit::service
