#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "probekit/dialogue.hpp"
#include "probekit/evalkit.hpp"
#include "probekit/pipeline.hpp"

namespace probekit::service {

struct Rating {
  int pc = 3;
  int ous = 3;
  // One entry per turn: true accepted probe, false rejected probe, null otherwise.
  std::vector<std::optional<bool>> probe_flags;
};

struct SessionRecord {
  DialogueSession session;
  std::string agent;
  std::string pair_id;
  bool human = true;
  std::vector<eval::JudgeVerdict> verdicts;
  std::optional<eval::SessionMetrics> metrics;
  std::optional<Rating> rating;
};

Json to_json(const Rating& r);
Rating rating_from_json(const Json& j);
Json to_json(const SessionRecord& r);
SessionRecord record_from_json(const Json& j);

// Append-only JSONL store. Every write appends the whole record; on load the
// last line for an id wins.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path path);
  void put(const SessionRecord& record);
  std::optional<SessionRecord> get(const std::string& id) const;
  std::vector<SessionRecord> all() const;
  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, SessionRecord> index_;
};

struct Response {
  int status = 200;
  Json body;
};

// Human-mode session API. The participant's text replaces the simulator; the
// agent answers with one turn per message. Requests for one session run one at
// a time.
class SessionService {
 public:
  SessionService(pipeline::RunConfig config, gateway::Gateway& gateway);

  Response route(const std::string& method, const std::string& path, const std::string& body);

  Response create_session(const Json& body);
  Response post_message(const std::string& id, const Json& body);
  Response get_session(const std::string& id);
  Response post_rating(const std::string& id, const Json& body);
  Response get_report();

  // Blocks serving HTTP on host:port until stop() is called.
  void serve(const std::string& host, int port);
  void stop();

  SessionStore& store() { return store_; }

 private:
  std::mutex& session_mutex(const std::string& id);
  const policy::PolicyParams& policy();

  pipeline::RunConfig config_;
  gateway::Gateway& gateway_;
  SessionStore store_;
  std::map<std::string, corpus::PairSpec> pairs_;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> session_mutexes_;
  std::optional<policy::PolicyParams> policy_;
  std::uint64_t next_id_ = 1;
  std::atomic<void*> server_{nullptr};
};

}  // namespace probekit::service
