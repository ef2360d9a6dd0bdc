#include "probekit/synthgen.hpp"

#include <fstream>

#include "probekit/errors.hpp"
#include "probekit/gateway.hpp"
#include "probekit/prompts.hpp"
#include "probekit/random.hpp"
#include "probekit/text.hpp"

namespace probekit::synth {

const std::vector<GoverningRule>& builtin_rules() {
  static const std::vector<GoverningRule> rules{
      {"ask_partial_market_info", Decision::Probe,
       "User provides market information but only partially (e.g., price, trend, supply, policy)."},
      {"ask_ongoing_attention", Decision::Probe,
       "User language indicates ongoing attention or experience with the market."},
      {"ask_topic_shift", Decision::Probe, "User shows willingness to shift or expand the topic."},
      {"ask_previous_answered", Decision::Probe, "The user's previous question has been answered."},
      {"answer_explicit_refusal", Decision::Wait, "User explicitly refuses or avoids answering."},
      {"answer_sufficient_info", Decision::Wait,
       "User has already provided sufficient, multi-dimensional market information."},
      {"answer_opinion_elicitation", Decision::Wait,
       "Further questions would elicit opinions or interpretations rather than facts."},
      {"answer_user_asking", Decision::Wait,
       "Conversation focus shifts to the user asking questions."},
  };
  return rules;
}

const GoverningRule& rule_by_id(std::string_view id) {
  for (const auto& r : builtin_rules()) {
    if (r.id == id) return r;
  }
  throw ValidationError("unknown governing rule '" + std::string(id) + "'");
}

const Lexicon& Lexicon::builtin() {
  static const Lexicon lex{
      {"copper", "crude oil", "soybeans", "gold", "natural gas", "wheat", "steel rebar", "coffee",
       "lithium carbonate", "corn", "aluminium", "cotton"},
      {
          {"How many tonnes of {topic} does your company expect to buy next quarter?",
           "We expect to buy about {n} thousand tonnes next quarter."},
          {"What share of your {topic} purchases is locked in with forward contracts?",
           "Roughly {n} percent of our purchases are hedged forward."},
          {"How many weeks of {topic} inventory is your firm currently holding?",
           "We are holding about {n} weeks of inventory right now."},
          {"By what percentage did your {topic} procurement budget change this year?",
           "Our procurement budget changed by about {n} percent this year."},
      }};
  return lex;
}

void SynthConfig::validate() const {
  if (sessions < 1) throw ConfigError("synth sessions must be >= 1");
  if (min_user_turns < 2 || max_user_turns < min_user_turns) {
    throw ConfigError("synth user turns must satisfy 2 <= min <= max");
  }
  if (lexicon.topics.empty() || lexicon.targets.empty()) {
    throw ValidationError("synth lexicon needs topics and targets");
  }
}

Json SynthConfig::to_json() const {
  return Json{{"sessions", sessions},
              {"seed", seed},
              {"min_user_turns", min_user_turns},
              {"max_user_turns", max_user_turns},
              {"topics", lexicon.topics.size()},
              {"targets", lexicon.targets.size()}};
}

namespace {

std::string sub(std::string s, const std::string& topic, int n) {
  s = prompts::fill(std::move(s), "{topic}", topic);
  return prompts::fill(std::move(s), "{n}", std::to_string(n));
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[rng.index(v.size())];
}

// Cue phrases are shared between the templates and match_condition().
struct Cues {
  static constexpr std::string_view partial = "have not looked at";
  static constexpr std::string_view attention = "following the";
  static constexpr std::string_view shift = "by the way";
  static constexpr std::string_view answered = "that answers my question";
  static constexpr std::string_view sufficient = "full picture";
  static constexpr std::string_view opinion = "personally think";
};

std::string final_utterance(const GoverningRule& rule, const std::string& topic, Rng& rng) {
  const int n = 2 + static_cast<int>(rng.index(12));
  const auto& id = rule.id;
  std::vector<std::string> options;
  if (id == "ask_partial_market_info") {
    options = {"I noticed {topic} prices moved about {n}% recently, but I have not looked at the "
               "supply side yet.",
               "Spot {topic} is up around {n}% this month; I have not looked at inventories though."};
  } else if (id == "ask_ongoing_attention") {
    options = {"I have been following the {topic} market closely for a few years now.",
               "I keep following the {topic} numbers every week, it is part of my job."};
  } else if (id == "ask_topic_shift") {
    options = {"By the way, I would also like to talk about how {topic} demand is shaping up.",
               "By the way, I am happy to go beyond prices and discuss the wider {topic} picture."};
  } else if (id == "ask_previous_answered") {
    options = {"Thanks, that answers my question.", "Great, that answers my question about {topic}."};
  } else if (id == "answer_explicit_refusal") {
    options = {std::string(prompts::kRefusalSentence) + " How volatile has {topic} been lately?",
               std::string(prompts::kRefusalSentence) + " What is the outlook for {topic} margins?"};
  } else if (id == "answer_sufficient_info") {
    options = {"To give you the full picture: {topic} prices are up {n}%, stocks are down, imports "
               "fell and policy support is unchanged.",
               "That is the full picture from my side: demand, supply, freight and tariffs on "
               "{topic} all moved by about {n}%."};
  } else if (id == "answer_opinion_elicitation") {
    options = {"Do you personally think {topic} will go up or down next year?",
               "What do you personally think about the long-term story for {topic}?"};
  } else if (id == "answer_user_asking") {
    options = {"Can you explain how {topic} futures are priced? And what drives the spread?",
               "What moves {topic} most in the short run? Is it weather or policy?"};
  } else {
    throw ValidationError("unknown governing rule '" + id + "'");
  }
  return sub(pick(rng, options), topic, n);
}

const std::vector<std::string>& opening_questions() {
  static const std::vector<std::string> qs{
      "What has been happening with {topic} prices this month?",
      "Why has the {topic} market been so volatile lately?",
      "How do inventories affect {topic} prices?",
      "What are the main drivers of {topic} demand right now?",
      "How do interest rates feed into the {topic} market?",
  };
  return qs;
}

const std::vector<std::string>& agent_answers() {
  static const std::vector<std::string> as{
      "{topic} prices have mostly tracked demand expectations and freight costs in recent weeks.",
      "The swings in {topic} mainly reflect supply disruptions combined with thin trading volumes.",
      "Higher inventories usually weigh on {topic} prices, while drawdowns tend to support them.",
      "Industrial demand and restocking cycles are the main drivers for {topic} at the moment.",
      "Rate moves change financing costs and the dollar, and both feed into {topic} pricing.",
  };
  return as;
}

struct Composed {
  std::vector<Utterance> entries;
  std::vector<Decision> decisions;
};

Composed compose(const GoverningRule& rule, const std::string& topic,
                 const std::string& target_question, int user_turns, Rng& rng) {
  Composed c;
  const int completed = user_turns - 1;
  for (int k = 0; k < completed; ++k) {
    const auto qi = rng.index(opening_questions().size());
    c.entries.push_back(Utterance::user(sub(opening_questions()[qi], topic, 0)));
    std::string answer = sub(agent_answers()[qi], topic, 0);
    auto decision = Decision::Wait;
    if (rule.id == "answer_explicit_refusal" && k == completed - 1) {
      // The user refuses the probe made on the previous agent turn.
      answer += " To tailor this further, could you tell me: " + target_question;
      decision = Decision::Probe;
    }
    c.entries.push_back(Utterance::agent(std::move(answer)));
    c.decisions.push_back(decision);
  }
  c.entries.push_back(Utterance::user(final_utterance(rule, topic, rng)));
  return c;
}

SynthSample assemble(const GoverningRule& rule, const std::string& topic, TargetInfo target,
                     Composed c, std::uint64_t seed) {
  DialogueSession s;
  s.id = "synth-" + std::to_string(seed);
  s.target = target;
  s.user_query = c.entries.front().text;
  for (std::size_t k = 0; k < c.decisions.size(); ++k) {
    s.turns.push_back(Turn{c.entries[2 * k], c.decisions[k], c.entries[2 * k + 1]});
  }
  s.closing_reply = c.entries.back();
  DialogueHistory history(std::move(c.entries), std::move(c.decisions));
  return SynthSample{std::move(s),
                     policy::LabeledExample{std::move(history), std::move(target), rule.label, rule.id},
                     topic};
}

struct Draw {
  std::string topic;
  TargetInfo target;
  int user_turns = 2;
};

Draw draw(const SynthConfig& config, Rng& rng, std::uint64_t seed) {
  Draw d;
  d.topic = pick(rng, config.lexicon.topics);
  const auto& t = pick(rng, config.lexicon.targets);
  const int n = 5 + static_cast<int>(rng.index(40));
  d.target.id = "synth-target-" + std::to_string(seed);
  d.target.question = sub(t.question, d.topic, n);
  d.target.reference_answer = sub(t.answer, d.topic, n);
  d.target.context = "Procurement planning for " + d.topic + ".";
  const auto span = static_cast<std::size_t>(config.max_user_turns - config.min_user_turns + 1);
  d.user_turns = config.min_user_turns + static_cast<int>(rng.index(span));
  return d;
}

}  // namespace

SynthSample generate_session(const GoverningRule& rule, const SynthConfig& config,
                             std::uint64_t seed) {
  config.validate();
  const auto& known = rule_by_id(rule.id);
  Rng rng(seed);
  auto d = draw(config, rng, seed);
  auto c = compose(known, d.topic, d.target.question, d.user_turns, rng);
  return assemble(known, d.topic, std::move(d.target), std::move(c), seed);
}

SynthSample generate_session(std::string_view rule_id, const SynthConfig& config,
                             std::uint64_t seed) {
  return generate_session(rule_by_id(rule_id), config, seed);
}

std::string render_synth_prompt(const GoverningRule& rule, const std::string& topic,
                                const std::string& target_question, int user_turns) {
  std::string p(prompts::asset("synth_dialogue"));
  p = prompts::fill(std::move(p), "[topic]", topic);
  p = prompts::fill(std::move(p), "[target information]", target_question);
  p = prompts::fill(std::move(p), "[user turns]", std::to_string(user_turns));
  return prompts::fill(std::move(p), "[rule description]", rule.description);
}

SynthSample generate_session_llm(const GoverningRule& rule, const SynthConfig& config,
                                 std::uint64_t seed, gateway::Gateway& gateway) {
  config.validate();
  const auto& known = rule_by_id(rule.id);
  Rng rng(seed);
  auto d = draw(config, rng, seed);
  gateway::ChatRequest req;
  req.seed = seed;
  req.messages.push_back(
      {gateway::Role::User, render_synth_prompt(known, d.topic, d.target.question, d.user_turns)});
  const auto raw = gateway.complete(req);

  Composed c;
  for (const auto& line : text::split_lines(raw)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    const auto lower = text::to_lower(t);
    if (lower.starts_with("user:")) {
      c.entries.push_back(Utterance::user(text::trim(t.substr(5))));
    } else if (lower.starts_with("assistant:")) {
      auto body = text::trim(t.substr(10));
      c.decisions.push_back(text::contains(body, "?") ? Decision::Probe : Decision::Wait);
      c.entries.push_back(Utterance::agent(std::move(body)));
    } else {
      throw ParseError("synthetic transcript line lacks a speaker prefix", raw);
    }
  }
  try {
    DialogueHistory check(c.entries, c.decisions);
  } catch (const ValidationError& e) {
    throw ParseError(std::string("synthetic transcript rejected: ") + e.what(), raw);
  }
  return assemble(known, d.topic, std::move(d.target), std::move(c), seed);
}

std::optional<std::string> match_condition(std::string_view utterance) {
  const auto t = text::trim(utterance);
  const auto lower = text::to_lower(t);
  if (t.starts_with(prompts::kRefusalSentence)) return "answer_explicit_refusal";
  if (text::contains(lower, Cues::answered)) return "ask_previous_answered";
  if (text::contains(lower, Cues::shift)) return "ask_topic_shift";
  if (text::contains(lower, Cues::attention)) return "ask_ongoing_attention";
  if (text::contains(lower, Cues::partial)) return "ask_partial_market_info";
  if (text::contains(lower, Cues::sufficient)) return "answer_sufficient_info";
  if (text::contains(lower, Cues::opinion)) return "answer_opinion_elicitation";
  if (text::count_char(t, '?') >= 2) return "answer_user_asking";
  return std::nullopt;
}

std::vector<policy::LabeledExample> generate_dataset(const SynthConfig& config,
                                                     gateway::Gateway* llm) {
  config.validate();
  const auto& rules = builtin_rules();
  std::vector<policy::LabeledExample> out;
  out.reserve(static_cast<std::size_t>(config.sessions));
  for (int i = 0; i < config.sessions; ++i) {
    const auto& rule = rules[static_cast<std::size_t>(i) % rules.size()];
    const auto seed = mix_seed(config.seed, static_cast<std::uint64_t>(i));
    auto sample = llm ? generate_session_llm(rule, config, seed, *llm)
                      : generate_session(rule, config, seed);
    out.push_back(std::move(sample.example));
  }
  return out;
}

void install_mock_script(gateway::MockBackend& backend, const SynthConfig& config) {
  auto lexicon = config.lexicon;
  backend.add_rule(
      "synth-dialogue", "Write a customer service dialogue",
      [lexicon](const gateway::ChatRequest& r) {
        const auto& p = r.last_user_content();
        auto field = [&](std::string_view before, std::string_view after) {
          auto b = p.find(before);
          if (b == std::string::npos) return std::string();
          b += before.size();
          auto e = p.find(after, b);
          return p.substr(b, e == std::string::npos ? std::string::npos : e - b);
        };
        const auto topic = field("assistant about ", ".\n");
        const auto target = field("ask the user: ", "\n");
        const int turns = std::stoi(field("must have ", " user turns"));
        const auto description = field("this condition: ", "\n");
        const GoverningRule* rule = nullptr;
        for (const auto& g : builtin_rules()) {
          if (g.description == description) rule = &g;
        }
        if (rule == nullptr) return std::string("user: Hello?");
        Rng rng(text::fnv1a(p));
        auto c = compose(*rule, topic, target, turns, rng);
        std::string out;
        for (const auto& u : c.entries) {
          out += u.speaker == Speaker::User ? "user: " : "assistant: ";
          out += u.text + "\n";
        }
        return out;
      });
}

Json to_json(const policy::LabeledExample& e) {
  Json history = Json::array();
  const auto& entries = e.history.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto j = probekit::to_json(entries[i]);
    if (entries[i].speaker == Speaker::Agent) j["decision"] = to_int(e.history.decisions()[i / 2]);
    history.push_back(std::move(j));
  }
  return Json{{"history", std::move(history)},
              {"target", probekit::to_json(e.target)},
              {"label", to_int(e.label)},
              {"rule_id", e.rule_id}};
}

policy::LabeledExample example_from_json(const Json& j) {
  std::vector<Utterance> entries;
  std::vector<Decision> decisions;
  for (const auto& u : j.at("history")) {
    entries.push_back(utterance_from_json(u));
    if (entries.back().speaker == Speaker::Agent) {
      decisions.push_back(decision_from_int(u.at("decision").get<int>()));
    }
  }
  return policy::LabeledExample{DialogueHistory(std::move(entries), std::move(decisions)),
                                target_from_json(j.at("target")),
                                decision_from_int(j.at("label").get<int>()),
                                j.value("rule_id", "")};
}

void save_dataset(const std::vector<policy::LabeledExample>& data,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path.string());
  for (const auto& e : data) out << to_json(e).dump() << '\n';
  if (!out) throw IoError("failed writing dataset " + path.string());
}

std::vector<policy::LabeledExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::vector<policy::LabeledExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(example_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), line);
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), line);
    }
  }
  return out;
}

}  // namespace probekit::synth
