#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "probekit/dialogue.hpp"

namespace probekit::gateway {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);

struct ChatMessage {
  Role role = Role::User;
  std::string content;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::string model;
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;

  // Non-empty messages; a system message may only appear first.
  void validate() const;
  Json to_json() const;
  // Text of the last user message ("" when none).
  const std::string& last_user_content() const;
};

// SHA-256 of the canonical request JSON (sorted keys, compact separators).
std::string request_digest(const ChatRequest& request);
std::string embed_digest(const std::string& model, const std::string& text);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

struct HttpOptions {
  std::string base_url;  // e.g. https://api.openai.com
  std::string api_key;
  std::string chat_path = "/v1/chat/completions";
  std::string embed_path = "/v1/embeddings";
  std::string embedding_model = "text-embedding-3-small";
  std::chrono::milliseconds timeout{60000};
  int max_retries = 4;
  std::chrono::milliseconds retry_base{500};
  std::uint64_t jitter_seed = 0;
};

struct AttemptRecord {
  int attempt = 0;
  int status = 0;  // HTTP status, or 0 for a connection failure/timeout
  std::string error;
};

// OpenAI-compatible chat-completions/embeddings client. Retries with
// exponential backoff and jitter on timeouts, 429 and 5xx.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpOptions options);
  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text) override;

  std::vector<AttemptRecord> attempt_log() const;

 private:
  std::string post_with_retry(const std::string& path, const std::string& body);

  HttpOptions options_;
  mutable std::mutex log_mutex_;
  std::vector<AttemptRecord> attempts_;
  std::atomic<std::uint64_t> jitter_counter_{0};
};

// Deterministic scripted backend. Rules are tried in registration order; the
// first matching rule produces the reply. Unmatched requests get a canned
// sentence chosen by a stable hash of the rendered messages.
class MockBackend final : public Backend {
 public:
  using Matcher = std::function<bool(const ChatRequest&)>;
  using Responder = std::function<std::string(const ChatRequest&)>;

  explicit MockBackend(std::uint64_t seed = 0, std::size_t embedding_dim = 64)
      : seed_(seed), embedding_dim_(embedding_dim) {}

  void add_rule(std::string name, Matcher matches, Responder respond);
  // Registers a rule that is tried before all existing ones.
  void prepend_rule(std::string name, Matcher matches, Responder respond);
  // Shorthand: match when the last user message contains `marker`.
  void add_rule(std::string name, std::string marker, Responder respond);

  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text) override;

  void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }
  std::size_t embedding_dim() const { return embedding_dim_; }

 private:
  struct Rule {
    std::string name;
    Matcher matches;
    Responder respond;
  };
  std::uint64_t seed_;
  std::size_t embedding_dim_;
  std::vector<Rule> rules_;
  std::chrono::milliseconds latency_{0};
};

struct CassetteEntry {
  std::string digest;
  Json request;
  Json response;
};

// Exact-match lookup in a JSONL cassette of (digest, request, response).
class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(const std::filesystem::path& cassette);
  explicit ReplayBackend(std::vector<CassetteEntry> entries);
  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text) override;

 private:
  std::unordered_map<std::string, Json> responses_;
  std::string embedding_model_ = "mock";
};

// Forwards to `inner` and appends every exchange to the cassette.
class RecordingBackend final : public Backend {
 public:
  RecordingBackend(std::unique_ptr<Backend> inner, const std::filesystem::path& cassette,
                   std::string embedding_model = "mock");
  std::string complete(const ChatRequest& request) override;
  std::vector<double> embed(const std::string& text) override;

 private:
  void append(const CassetteEntry& entry);

  std::unique_ptr<Backend> inner_;
  std::filesystem::path cassette_;
  std::string embedding_model_;
  std::mutex mutex_;
};

std::vector<CassetteEntry> load_cassette(const std::filesystem::path& path);

enum class BackendKind { Live, Mock, Replay, Record };

std::string_view to_string(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::string base_url;
  std::string model = "gpt-4o-mini";
  std::string embedding_model = "text-embedding-3-small";
  // Name of the environment variable holding the credential. Credentials are
  // never read from config files.
  std::string credential_env = "PROBEKIT_API_KEY";
  std::chrono::milliseconds timeout{60000};
  int max_retries = 4;
  std::chrono::milliseconds retry_base{500};
  std::size_t concurrency = 8;
  std::filesystem::path cassette;
  std::uint64_t mock_seed = 0;

  // Throws ConfigError: Live/Record need a URL and the credential variable set;
  // Replay/Record need a cassette path.
  void validate() const;
  Json to_json() const;
};

// Thread-safe front door: bounds in-flight calls and stamps the model id.
class Gateway {
 public:
  Gateway(std::unique_ptr<Backend> backend, std::size_t concurrency, std::string model = {});

  std::string complete(ChatRequest request);
  std::vector<double> embed(const std::string& text);

  Backend& backend() { return *backend_; }
  std::size_t max_in_flight() const { return max_in_flight_.load(); }
  std::size_t calls() const { return calls_.load(); }
  std::size_t concurrency() const { return concurrency_; }

 private:
  class Slot;

  std::unique_ptr<Backend> backend_;
  std::size_t concurrency_;
  std::string model_;
  std::counting_semaphore<1 << 20> slots_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
  std::atomic<std::size_t> calls_{0};
};

// Builds a gateway for `config`. A Mock backend starts empty; callers install
// the module scripts they need (see pipeline::install_mock_scripts).
std::unique_ptr<Gateway> make_gateway(const BackendConfig& config,
                                      std::unique_ptr<Backend> mock_override = nullptr);

double cosine(std::span<const double> a, std::span<const double> b);

}  // namespace probekit::gateway
