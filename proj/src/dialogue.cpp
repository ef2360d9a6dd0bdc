#include "probekit/dialogue.hpp"

#include "probekit/errors.hpp"
#include "probekit/prompts.hpp"
#include "probekit/text.hpp"

namespace probekit {

Decision decision_from_int(int v) {
  if (v == 0) return Decision::Wait;
  if (v == 1) return Decision::Probe;
  throw ValidationError("decision must be 0 or 1, got " + std::to_string(v));
}

std::string_view to_string(Decision d) { return d == Decision::Probe ? "Probe" : "Wait"; }

std::string_view to_string(Speaker s) { return s == Speaker::User ? "user" : "agent"; }

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Active: return "Active";
    case SessionStatus::SuccessTerminated: return "SuccessTerminated";
    case SessionStatus::MaxTurnsReached: return "MaxTurnsReached";
    case SessionStatus::UserEnded: return "UserEnded";
  }
  return "Active";
}

SessionStatus session_status_from_string(std::string_view s) {
  for (auto st : {SessionStatus::Active, SessionStatus::SuccessTerminated,
                  SessionStatus::MaxTurnsReached, SessionStatus::UserEnded}) {
    if (to_string(st) == s) return st;
  }
  throw ValidationError("unknown session status '" + std::string(s) + "'");
}

Utterance Utterance::user(std::string text, std::optional<Annotations> ann) {
  return Utterance{Speaker::User, std::move(text), ann};
}

Utterance Utterance::agent(std::string text, std::optional<Annotations> ann) {
  return Utterance{Speaker::Agent, std::move(text), ann};
}

void Utterance::validate() const {
  if (text::trim(text).empty()) throw ValidationError("utterance text is empty");
  if (annotations && annotations->is_refusal && speaker != Speaker::User) {
    throw ValidationError("only user utterances can be refusals");
  }
}

void TargetInfo::validate() const {
  if (text::trim(question).empty()) throw ValidationError("target question is empty");
  if (text::trim(reference_answer).empty()) {
    throw ValidationError("target reference answer is empty");
  }
}

std::vector<Utterance> DialogueSession::flatten() const {
  std::vector<Utterance> out;
  out.reserve(turns.size() * 2 + 1);
  for (const auto& t : turns) {
    out.push_back(t.user);
    out.push_back(t.agent);
  }
  if (closing_reply) out.push_back(*closing_reply);
  return out;
}

DialogueSession open_session(std::string id, TargetInfo target, std::string user_query,
                             int max_turns) {
  if (max_turns < 1) throw ValidationError("max_turns must be >= 1");
  target.validate();
  DialogueSession s;
  s.id = std::move(id);
  s.target = std::move(target);
  s.user_query = std::move(user_query);
  s.max_turns = max_turns;
  return s;
}

DialogueHistory::DialogueHistory(std::vector<Utterance> entries, std::vector<Decision> decisions)
    : entries_(std::move(entries)), decisions_(std::move(decisions)) {
  if (entries_.empty() || entries_.back().speaker != Speaker::User) {
    throw ValidationError("dialogue history must end with a user utterance");
  }
  if (entries_.size() != 2 * decisions_.size() + 1) {
    throw ValidationError("dialogue history needs one decision per completed agent turn");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto expected = i % 2 == 0 ? Speaker::User : Speaker::Agent;
    if (entries_[i].speaker != expected) {
      throw ValidationError("dialogue history speakers must alternate user/agent");
    }
  }
}

DialogueHistory history_at(const DialogueSession& session, int turn_index) {
  const int completed = static_cast<int>(session.turns.size());
  const bool has_next_user = session.closing_reply.has_value();
  if (turn_index < 1 || turn_index > completed + 1 ||
      (turn_index == completed + 1 && !has_next_user)) {
    throw BoundsError("history_at: turn index " + std::to_string(turn_index) +
                      " out of range for session with " + std::to_string(completed) + " turns");
  }
  std::vector<Utterance> entries;
  std::vector<Decision> decisions;
  for (int k = 0; k < turn_index - 1; ++k) {
    entries.push_back(session.turns[k].user);
    entries.push_back(session.turns[k].agent);
    decisions.push_back(session.turns[k].decision);
  }
  entries.push_back(turn_index <= completed ? session.turns[turn_index - 1].user
                                            : *session.closing_reply);
  return DialogueHistory(std::move(entries), std::move(decisions));
}

DialogueHistory history_with_pending(const DialogueSession& session, const Utterance& pending_user) {
  if (session.closing_reply) {
    throw StateError("session already has a closing reply; no pending user turn");
  }
  std::vector<Utterance> entries;
  std::vector<Decision> decisions;
  for (const auto& t : session.turns) {
    entries.push_back(t.user);
    entries.push_back(t.agent);
    decisions.push_back(t.decision);
  }
  entries.push_back(pending_user);
  return DialogueHistory(std::move(entries), std::move(decisions));
}

DialogueSession append_turn(DialogueSession session, Utterance user, Decision decision,
                            Utterance agent, std::optional<Utterance> reply) {
  if (session.status != SessionStatus::Active) {
    throw StateError("cannot append to session '" + session.id + "' with status " +
                     std::string(to_string(session.status)));
  }
  if (user.speaker != Speaker::User) throw ValidationError("turn user utterance has agent speaker");
  if (agent.speaker != Speaker::Agent) throw ValidationError("turn agent utterance has user speaker");
  user.validate();
  agent.validate();
  if (user.annotations && user.annotations->reveals_target) {
    throw ValidationError("a target-revealing reply terminates the session; it cannot open a turn");
  }
  if (reply) {
    if (reply->speaker != Speaker::User) throw ValidationError("reply must come from the user");
    reply->validate();
  }

  session.turns.push_back(Turn{std::move(user), decision, std::move(agent)});
  const bool revealed = reply && reply->annotations && reply->annotations->reveals_target;
  const bool ended = reply && reply->annotations && reply->annotations->ends_session;
  const bool at_cap = static_cast<int>(session.turns.size()) >= session.max_turns;

  if (revealed) {
    session.status = SessionStatus::SuccessTerminated;
  } else if (at_cap) {
    session.status = SessionStatus::MaxTurnsReached;
  } else if (ended) {
    session.status = SessionStatus::UserEnded;
  }
  if (session.status != SessionStatus::Active && reply) session.closing_reply = std::move(reply);
  return session;
}

Annotations effective_annotations(const Utterance& u) {
  if (u.annotations) return *u.annotations;
  Annotations a;
  const auto t = text::trim(u.text);
  a.contains_question = t.find('?') != std::string::npos;
  a.is_refusal = u.speaker == Speaker::User && t.starts_with(prompts::kRefusalSentence);
  return a;
}

Json to_json(const Utterance& u) {
  Json j;
  j["speaker"] = to_string(u.speaker);
  j["text"] = u.text;
  if (u.annotations) {
    const auto& a = *u.annotations;
    j["annotations"] = Json{{"contains_question", a.contains_question},
                            {"is_refusal", a.is_refusal},
                            {"reveals_target", a.reveals_target},
                            {"ends_session", a.ends_session}};
  }
  return j;
}

Json to_json(const TargetInfo& t) {
  return Json{{"id", t.id},
              {"question", t.question},
              {"reference_answer", t.reference_answer},
              {"context", t.context}};
}

Json to_json(const DialogueSession& s) {
  Json j;
  j["id"] = s.id;
  j["target"] = to_json(s.target);
  j["user_query"] = s.user_query;
  j["max_turns"] = s.max_turns;
  j["status"] = to_string(s.status);
  Json turns = Json::array();
  for (const auto& t : s.turns) {
    turns.push_back(Json{{"user", to_json(t.user)},
                         {"decision", to_int(t.decision)},
                         {"agent", to_json(t.agent)}});
  }
  j["turns"] = std::move(turns);
  j["closing_reply"] = s.closing_reply ? to_json(*s.closing_reply) : Json(nullptr);
  return j;
}

Utterance utterance_from_json(const Json& j) {
  Utterance u;
  const auto speaker = j.at("speaker").get<std::string>();
  if (speaker == "user") {
    u.speaker = Speaker::User;
  } else if (speaker == "agent") {
    u.speaker = Speaker::Agent;
  } else {
    throw ValidationError("unknown speaker '" + speaker + "'");
  }
  u.text = j.at("text").get<std::string>();
  if (auto it = j.find("annotations"); it != j.end() && !it->is_null()) {
    Annotations a;
    a.contains_question = it->value("contains_question", false);
    a.is_refusal = it->value("is_refusal", false);
    a.reveals_target = it->value("reveals_target", false);
    a.ends_session = it->value("ends_session", false);
    u.annotations = a;
  }
  u.validate();
  return u;
}

TargetInfo target_from_json(const Json& j) {
  TargetInfo t;
  t.id = j.value("id", "");
  t.question = j.at("question").get<std::string>();
  t.reference_answer = j.at("reference_answer").get<std::string>();
  t.context = j.value("context", "");
  t.validate();
  return t;
}

DialogueSession session_from_json(const Json& j) {
  DialogueSession s;
  s.id = j.at("id").get<std::string>();
  s.target = target_from_json(j.at("target"));
  s.user_query = j.value("user_query", "");
  s.max_turns = j.value("max_turns", kDefaultMaxTurns);
  s.status = session_status_from_string(j.at("status").get<std::string>());
  for (const auto& t : j.at("turns")) {
    s.turns.push_back(Turn{utterance_from_json(t.at("user")),
                           decision_from_int(t.at("decision").get<int>()),
                           utterance_from_json(t.at("agent"))});
  }
  if (auto it = j.find("closing_reply"); it != j.end() && !it->is_null()) {
    s.closing_reply = utterance_from_json(*it);
  }
  if (static_cast<int>(s.turns.size()) > s.max_turns) {
    throw ValidationError("session '" + s.id + "' has more turns than max_turns");
  }
  return s;
}

std::string encode_session(const DialogueSession& s) { return to_json(s).dump(); }

DialogueSession decode_session(std::string_view line) {
  try {
    return session_from_json(Json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed session line: ") + e.what(), std::string(line));
  }
}

}  // namespace probekit
