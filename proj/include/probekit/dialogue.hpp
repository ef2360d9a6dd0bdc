#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace probekit {

using Json = nlohmann::ordered_json;

enum class Speaker { User, Agent };

// d_t: Probe = 1, Wait = 0.
enum class Decision { Wait = 0, Probe = 1 };

inline int to_int(Decision d) { return d == Decision::Probe ? 1 : 0; }
Decision decision_from_int(int v);
std::string_view to_string(Decision d);
std::string_view to_string(Speaker s);

// Simulator-side tags. Present only when a rule-based simulator or mock agent
// produced the utterance; live LLM utterances carry none.
struct Annotations {
  bool contains_question = false;
  bool is_refusal = false;
  bool reveals_target = false;
  // Set on the simulator reply that ends the session (user gave up).
  bool ends_session = false;

  bool operator==(const Annotations&) const = default;
};

struct Utterance {
  Speaker speaker = Speaker::User;
  std::string text;
  std::optional<Annotations> annotations;

  static Utterance user(std::string text, std::optional<Annotations> ann = std::nullopt);
  static Utterance agent(std::string text, std::optional<Annotations> ann = std::nullopt);

  // Throws ValidationError: empty text after trimming, or a refusal tag on an
  // agent utterance.
  void validate() const;

  bool operator==(const Utterance&) const = default;
};

struct TargetInfo {
  std::string id;
  std::string question;
  std::string reference_answer;
  std::string context;

  void validate() const;
  bool operator==(const TargetInfo&) const = default;
};

struct Turn {
  Utterance user;
  Decision decision = Decision::Wait;
  Utterance agent;

  bool operator==(const Turn&) const = default;
};

enum class SessionStatus { Active, SuccessTerminated, MaxTurnsReached, UserEnded };

std::string_view to_string(SessionStatus s);
SessionStatus session_status_from_string(std::string_view s);

inline constexpr int kDefaultMaxTurns = 8;

struct DialogueSession {
  std::string id;
  TargetInfo target;
  std::string user_query;
  std::vector<Turn> turns;
  // The simulator reply that closed the session (u_{T+1}); it has no agent
  // response. Absent while Active and for sessions that simply ran out of turns
  // without a recorded reply.
  std::optional<Utterance> closing_reply;
  SessionStatus status = SessionStatus::Active;
  int max_turns = kDefaultMaxTurns;

  // u_1, r_1, ..., u_T, r_T[, closing_reply]
  std::vector<Utterance> flatten() const;

  bool operator==(const DialogueSession&) const = default;
};

DialogueSession open_session(std::string id, TargetInfo target, std::string user_query,
                             int max_turns = kDefaultMaxTurns);

// h_t: utterances up to and including the current user utterance, plus the
// decisions taken on the completed agent turns inside the view.
class DialogueHistory {
 public:
  DialogueHistory(std::vector<Utterance> entries, std::vector<Decision> decisions);

  const std::vector<Utterance>& entries() const { return entries_; }
  const std::vector<Decision>& decisions() const { return decisions_; }
  const Utterance& last_user() const { return entries_.back(); }

  // 1-based index of the current turn (number of user utterances).
  int turn_index() const { return static_cast<int>(decisions_.size()) + 1; }

  // User utterance that follows completed agent turn k (0-based).
  const Utterance& user_after(std::size_t k) const { return entries_[2 * k + 2]; }

  bool operator==(const DialogueHistory&) const = default;

 private:
  std::vector<Utterance> entries_;
  std::vector<Decision> decisions_;
};

// Utterances strictly before agent turn `turn_index`, ending with u_{turn_index}.
// turn_index = turns.size() + 1 is valid only when a closing reply exists.
DialogueHistory history_at(const DialogueSession& session, int turn_index);

// History for the next agent turn when `pending_user` is the simulator reply
// that has not been answered yet.
DialogueHistory history_with_pending(const DialogueSession& session, const Utterance& pending_user);

// Appends (user, decision, agent). `reply` is the user's answer to this agent
// turn (u_{t+1}); it decides success/user-ended termination and is stored as
// the closing reply when the session terminates. Throws StateError on a
// non-Active session and ValidationError on speaker mismatches.
DialogueSession append_turn(DialogueSession session, Utterance user, Decision decision,
                            Utterance agent, std::optional<Utterance> reply = std::nullopt);

// The utterance's annotations, or tags inferred from its text when absent:
// refusal = starts with the refusal sentence, question = contains '?'.
// reveals_target is never inferred.
Annotations effective_annotations(const Utterance& u);

Json to_json(const Utterance& u);
Json to_json(const TargetInfo& t);
Json to_json(const DialogueSession& s);
Utterance utterance_from_json(const Json& j);
TargetInfo target_from_json(const Json& j);
DialogueSession session_from_json(const Json& j);

// One JSONL line (no trailing newline). Field order is fixed.
std::string encode_session(const DialogueSession& s);
DialogueSession decode_session(std::string_view line);

}  // namespace probekit
