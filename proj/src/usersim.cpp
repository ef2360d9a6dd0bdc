#include "probekit/usersim.hpp"

#include <algorithm>
#include <fstream>

#include "probekit/errors.hpp"
#include "probekit/gateway.hpp"
#include "probekit/prompts.hpp"
#include "probekit/random.hpp"
#include "probekit/text.hpp"

namespace probekit::usersim {

const std::vector<BehavioralInstruction>& instruction_catalog() {
  // Trigger proxies used by refusal_trigger() are noted per entry.
  static const std::vector<BehavioralInstruction> catalog{
      {1, "An expert repeatedly asks you questions"},                     // >= 2 earlier probes
      {2, "The question is unrelated to the current topic"},             // overlap < 0.1
      {3, "It interrupts your expression"},                              // query not fully told
      {4, "The question is impolite or overly complicated"},             // > 60 tokens
      {5, "The timing is inappropriate or conflicts with the context"},  // turn 1
      {6, "The question is too complex to answer"},                      // >= 2 question marks
      {7, "The question involves private or sensitive information"},     // sensitive lexicon
      {8, "You don't trust the other party yet and don't want to answer"},  // turn < 3
  };
  return catalog;
}

const BehavioralInstruction& instruction(int id) {
  const auto& c = instruction_catalog();
  if (id < 1 || id > static_cast<int>(c.size())) {
    throw ValidationError("unknown instruction id " + std::to_string(id));
  }
  return c[static_cast<std::size_t>(id - 1)];
}

std::vector<Combination> enumerate_combinations(int k_min, int k_max) {
  const int n = static_cast<int>(instruction_catalog().size());
  if (k_min < 1 || k_max > n || k_min > k_max) {
    throw ValidationError("combination sizes must satisfy 1 <= k_min <= k_max <= " +
                          std::to_string(n));
  }
  std::vector<Combination> out;
  for (int k = k_min; k <= k_max; ++k) {
    // Lexicographic k-subsets of 1..n.
    Combination c(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = i + 1;
    while (true) {
      out.push_back(c);
      int i = k - 1;
      while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i + 1) --i;
      if (i < 0) break;
      ++c[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) {
        c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
      }
    }
  }
  return out;
}

CombinationSplit split_train_test(const std::vector<Combination>& combinations,
                                  std::uint64_t seed) {
  if (combinations.size() != 254) {
    throw ValidationError("expected 254 combinations, got " + std::to_string(combinations.size()));
  }
  auto shuffled = combinations;
  Rng rng(seed);
  rng.shuffle(shuffled);
  const auto half = shuffled.begin() + static_cast<std::ptrdiff_t>(shuffled.size() / 2);
  return {{shuffled.begin(), half}, {half, shuffled.end()}};
}

const std::vector<std::string>& sensitive_terms() {
  static const std::vector<std::string> terms{
      "salary",   "income",  "password", "account number", "bank account", "address",
      "phone",    "email",   "ssn",      "social security", "net worth",   "personal",
      "private",  "family",  "health",   "credit card",     "home",        "age"};
  return terms;
}

void SimulatorProfile::validate() const {
  if (query_script.empty()) throw ValidationError("profile " + id + " has an empty query script");
  for (const auto& f : query_script) {
    if (text::trim(f).empty()) throw ValidationError("profile " + id + " has an empty fragment");
  }
  if (instructions.empty() || instructions.size() > 7) {
    throw ValidationError("profile " + id + " must have 1..7 instructions");
  }
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    instruction(instructions[i]);
    if (i > 0 && instructions[i] <= instructions[i - 1]) {
      throw ValidationError("profile " + id + " instructions must be sorted and unique");
    }
  }
  if (satisfaction < 1.0 || satisfaction > 5.0) {
    throw ValidationError("profile " + id + " satisfaction must lie in [1, 5]");
  }
  if (patience < 1) throw ValidationError("profile " + id + " patience must be >= 1");
  target.validate();
}

std::string SimulatorProfile::query() const { return text::join(query_script, " "); }

Json to_json(const SimulatorProfile& p) {
  return Json{{"id", p.id},
              {"query_script", p.query_script},
              {"target", probekit::to_json(p.target)},
              {"instructions", p.instructions},
              {"satisfaction", p.satisfaction},
              {"patience", p.patience}};
}

SimulatorProfile profile_from_json(const Json& j) {
  SimulatorProfile p;
  try {
    p.id = j.at("id").get<std::string>();
    p.query_script = j.at("query_script").get<std::vector<std::string>>();
    p.target = target_from_json(j.at("target"));
    p.instructions = j.at("instructions").get<Combination>();
    p.satisfaction = j.value("satisfaction", 5.0);
    p.patience = j.value("patience", 6);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad simulator profile: ") + e.what(), j.dump());
  }
  p.validate();
  return p;
}

void save_profiles(const std::vector<SimulatorProfile>& profiles,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : profiles) out << to_json(p).dump() << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<SimulatorProfile> load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SimulatorProfile> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(profile_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), line);
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), line);
    }
  }
  return out;
}

std::vector<std::string> reveal_script(const std::string& question, bool with_follow_up) {
  auto tokens = text::content_tokens(question);
  if (tokens.size() > 5) tokens.resize(5);
  std::vector<std::string> script;
  script.push_back(tokens.empty() ? "Hi, I have a question about some figures. Can you help?"
                                  : "Hi, I have a question about " + text::join(tokens, " ") +
                                        ". Can you help?");
  script.push_back(text::trim(question));
  if (with_follow_up) script.push_back("And how does that compare with the prior period?");
  return script;
}

namespace {

const std::vector<std::string>& follow_ups() {
  static const std::vector<std::string> lines{
      "Could you explain what drives that number?",
      "How should I read that against the wider market?",
      "What would change that picture in the next quarter?",
      "Which part of that matters most for an investor?",
  };
  return lines;
}

std::string topic_of(const SimulatorState& s) {
  std::vector<std::string> revealed(
      s.profile.query_script.begin(),
      s.profile.query_script.begin() + std::max(1, s.fragments_revealed));
  return text::join(revealed, " ");
}

// Next query fragment if any remain, else a follow-up question. Advances state.
std::string next_question(SimulatorState& s, std::uint64_t seed, bool* was_fragment) {
  const auto total = static_cast<int>(s.profile.query_script.size());
  if (s.fragments_revealed < total) {
    if (was_fragment) *was_fragment = true;
    return s.profile.query_script[static_cast<std::size_t>(s.fragments_revealed++)];
  }
  if (was_fragment) *was_fragment = false;
  const auto& lines = follow_ups();
  return lines[mix_seed(seed, static_cast<std::uint64_t>(s.turn)) % lines.size()];
}

}  // namespace

std::pair<SimulatorState, Utterance> start_session(const SimulatorProfile& profile) {
  profile.validate();
  SimulatorState s;
  s.profile = profile;
  s.satisfaction = profile.satisfaction;
  s.fragments_revealed = 1;
  Annotations ann;
  ann.contains_question = text::contains(profile.query_script.front(), "?");
  return {s, Utterance::user(profile.query_script.front(), ann)};
}

std::optional<int> refusal_trigger(const SimulatorState& state, const Utterance& agent_message) {
  const int turn = state.turn + 1;
  const auto& msg = agent_message.text;
  for (int id : state.profile.instructions) {
    bool fires = false;
    switch (id) {
      case 1: fires = state.probes_seen >= kProbeRepeatLimit; break;
      case 2: fires = text::token_overlap(msg, topic_of(state)) < kTopicOverlapThreshold; break;
      case 3:
        fires = state.fragments_revealed < static_cast<int>(state.profile.query_script.size());
        break;
      case 4: fires = text::tokenize(msg).size() > kComplexTokenLimit; break;
      case 5: fires = turn == 1; break;
      case 6: fires = text::count_char(msg, '?') >= 2; break;
      case 7: {
        const auto lower = text::to_lower(msg);
        const auto padded = " " + text::join(text::tokenize(lower), " ") + " ";
        for (const auto& term : sensitive_terms()) {
          if (text::contains(padded, " " + term + " ")) {
            fires = true;
            break;
          }
        }
        break;
      }
      case 8: fires = turn < kTrustTurn; break;
      default: break;
    }
    if (fires) return id;
  }
  return std::nullopt;
}

SimReply simulate_reply(const SimulatorState& state, const Utterance& agent_message,
                        bool agent_probed, std::uint64_t seed) {
  if (state.ended) throw StateError("simulator session has ended");
  if (agent_message.speaker != Speaker::Agent) {
    throw ValidationError("simulator expects an agent message");
  }
  SimulatorState next = state;
  Annotations ann;
  std::string text;
  const bool real_probe = agent_probed && text::contains(agent_message.text, "?");
  const auto trigger = real_probe ? refusal_trigger(state, agent_message) : std::nullopt;
  next.turn = state.turn + 1;
  if (agent_probed) ++next.probes_seen;

  if (real_probe && trigger) {
    next.last_probe_trigger = trigger;
    next.satisfaction = std::max(kSatisfactionFloor, next.satisfaction - kSatisfactionStep);
    text = std::string(prompts::kRefusalSentence) + " " + next_question(next, seed, nullptr);
    ann.is_refusal = true;
  } else if (real_probe && !state.revealed) {
    next.revealed = true;
    text = text::trim(state.profile.target.reference_answer) + " " +
           next_question(next, seed, nullptr);
    ann.reveals_target = true;
  } else {
    bool fragment = false;
    text = next_question(next, seed, &fragment);
    if (!fragment && !agent_probed) ++next.idle_turns;
    if (next.idle_turns >= state.profile.patience) {
      text = "Alright, that covers what I needed for today. Thanks for your time.";
      ann.ends_session = true;
      next.ended = true;
    }
  }
  ann.contains_question = text::contains(text, "?");
  return {Utterance::user(std::move(text), ann), std::move(next)};
}

// ---------------------------------------------------------------------------

RuleSimulator::RuleSimulator(SimulatorProfile profile) {
  auto [state, opening] = start_session(profile);
  state_ = std::move(state);
  opening_ = std::move(opening);
}

Utterance RuleSimulator::open() { return opening_; }

Utterance RuleSimulator::reply(const Utterance& agent_message, bool agent_probed,
                               std::uint64_t seed) {
  auto r = simulate_reply(state_, agent_message, agent_probed, seed);
  state_ = std::move(r.state);
  return std::move(r.reply);
}

ScriptedSimulator::ScriptedSimulator(SimulatorProfile profile,
                                     std::vector<ScriptedProbeReply> probe_table)
    : profile_(std::move(profile)), table_(std::move(probe_table)) {
  profile_.validate();
}

Utterance ScriptedSimulator::open() {
  return Utterance::user(profile_.query_script.front(), Annotations{true, false, false, false});
}

Utterance ScriptedSimulator::reply(const Utterance&, bool agent_probed, std::uint64_t) {
  if (ended_) throw StateError("simulator session has ended");
  const auto k = static_cast<std::size_t>(turn_++);
  const std::string follow = "What else should I know?";
  Annotations ann;
  ann.contains_question = true;
  if (!agent_probed) return Utterance::user(follow, ann);
  const auto kind = k < table_.size() ? table_[k] : ScriptedProbeReply::Refuse;
  switch (kind) {
    case ScriptedProbeReply::Reveal:
      ann.reveals_target = true;
      ended_ = true;
      return Utterance::user(profile_.target.reference_answer + " " + follow, ann);
    case ScriptedProbeReply::Refuse:
      ann.is_refusal = true;
      return Utterance::user(std::string(prompts::kRefusalSentence) + " " + follow, ann);
    case ScriptedProbeReply::Ignore:
      break;
  }
  return Utterance::user(follow, ann);
}

std::string render_simulator_prompt(const SimulatorProfile& profile) {
  std::string lines;
  for (std::size_t i = 0; i < profile.instructions.size(); ++i) {
    if (i) lines += '\n';
    lines += "- " + instruction(profile.instructions[i]).text;
  }
  return prompts::fill(std::string(prompts::asset("user_simulator_system")),
                       "[Behavioral instructions]", lines);
}

LlmSimulator::LlmSimulator(SimulatorProfile profile, gateway::Gateway& gateway)
    : profile_(std::move(profile)), gateway_(gateway) {
  profile_.validate();
}

std::string LlmSimulator::system_prompt() const { return render_simulator_prompt(profile_); }

Utterance LlmSimulator::open() {
  transcript_.clear();
  transcript_.emplace_back(false, profile_.query_script.front());
  return Utterance::user(profile_.query_script.front());
}

Utterance LlmSimulator::reply(const Utterance& agent_message, bool, std::uint64_t seed) {
  transcript_.emplace_back(true, agent_message.text);
  gateway::ChatRequest req;
  req.seed = seed;
  req.messages.push_back({gateway::Role::System, system_prompt()});
  // The simulator sees its own query first, then the dialogue with the roles
  // swapped: agent turns arrive as user messages.
  req.messages.push_back({gateway::Role::User,
                          prompts::fill(std::string(prompts::asset("user_simulator_user")),
                                        "[User query]", profile_.query())});
  for (const auto& [is_agent, text] : transcript_) {
    req.messages.push_back({is_agent ? gateway::Role::User : gateway::Role::Assistant, text});
  }
  auto text = text::trim(gateway_.complete(std::move(req)));
  if (text.empty()) throw ParseError("simulator returned an empty reply");
  transcript_.emplace_back(false, text);
  return Utterance::user(std::move(text));
}

}  // namespace probekit::usersim
