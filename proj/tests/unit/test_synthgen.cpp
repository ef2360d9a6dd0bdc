#include <doctest.h>

#include <map>
#include <set>

#include "helpers.hpp"
#include "probekit/errors.hpp"
#include "probekit/gateway.hpp"
#include "probekit/prompts.hpp"
#include "probekit/synthgen.hpp"
#include "probekit/text.hpp"

using namespace probekit;
using namespace probekit::synth;

TEST_CASE("governing rules") {
  const auto& rules = builtin_rules();
  CHECK(rules.size() == 8);
  int ask = 0;
  std::set<std::string> ids;
  for (const auto& r : rules) {
    CHECK_FALSE(r.description.empty());
    ids.insert(r.id);
    ask += r.label == Decision::Probe ? 1 : 0;
  }
  CHECK(ask == 4);
  CHECK(ids.size() == 8);
  CHECK(rule_by_id("answer_explicit_refusal").label == Decision::Wait);
  CHECK_THROWS_AS(rule_by_id("nope"), ValidationError);
}

TEST_CASE("rule-conditioned fragments") {
  SynthConfig cfg;
  const auto refusal = generate_session("answer_explicit_refusal", cfg, 3);
  REQUIRE(refusal.fragment.closing_reply);
  CHECK(refusal.fragment.closing_reply->text.rfind(std::string(prompts::kRefusalSentence), 0) == 0);
  CHECK(refusal.example.label == Decision::Wait);
  CHECK(refusal.example.rule_id == "answer_explicit_refusal");
  CHECK(refusal.fragment.turns.back().decision == Decision::Probe);

  const auto answered = generate_session("ask_previous_answered", cfg, 3);
  CHECK(answered.example.label == Decision::Probe);
  REQUIRE_FALSE(answered.fragment.turns.empty());
  const auto& last_agent = answered.fragment.turns.back().agent.text;
  CHECK_FALSE(last_agent.empty());
  CHECK(last_agent.find('?') == std::string::npos);
  CHECK(match_condition(answered.fragment.closing_reply->text) == "ask_previous_answered");

  CHECK(generate_session("ask_topic_shift", cfg, 9).fragment ==
        generate_session("ask_topic_shift", cfg, 9).fragment);

  for (const auto& rule : builtin_rules()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto s = generate_session(rule, cfg, seed);
      INFO(rule.id << " seed " << seed);
      CHECK(match_condition(s.fragment.closing_reply->text) == rule.id);
      CHECK(s.example.label == rule.label);
      CHECK(s.example.history.last_user().text == s.fragment.closing_reply->text);
      const int users = static_cast<int>(s.fragment.turns.size()) + 1;
      CHECK(users >= cfg.min_user_turns);
      CHECK(users <= cfg.max_user_turns);
    }
  }
}

TEST_CASE("dataset generation") {
  SynthConfig cfg;
  cfg.seed = 5;
  const auto data = generate_dataset(cfg);
  CHECK(data.size() == 600);
  std::map<std::string, int> per_rule;
  int probes = 0;
  for (const auto& e : data) {
    ++per_rule[e.rule_id];
    probes += to_int(e.label);
  }
  CHECK(per_rule.size() == 8);
  for (const auto& [id, n] : per_rule) CHECK(std::abs(n - 75) <= 1);
  const double frac = probes / 600.0;
  CHECK(frac >= 0.4);
  CHECK(frac <= 0.6);

  cfg.sessions = 8;
  std::set<std::string> ids;
  for (const auto& e : generate_dataset(cfg)) ids.insert(e.rule_id);
  CHECK(ids.size() == 8);

  cfg.sessions = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("dataset persistence") {
  SynthConfig cfg;
  cfg.sessions = 16;
  const auto data = generate_dataset(cfg);
  const auto dir = testing::fresh_dir("synth");
  save_dataset(data, dir / "d.jsonl");
  const auto back = load_dataset(dir / "d.jsonl");
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].history == data[i].history);
    CHECK(back[i].target == data[i].target);
    CHECK(back[i].label == data[i].label);
    CHECK(back[i].rule_id == data[i].rule_id);
  }
}

TEST_CASE("LLM-backed generation through the mock script") {
  SynthConfig cfg;
  cfg.sessions = 8;
  auto mock = std::make_unique<gateway::MockBackend>(0);
  install_mock_script(*mock, cfg);
  gateway::Gateway gw(std::move(mock), 2);
  const auto data = generate_dataset(cfg, &gw);
  CHECK(data.size() == 8);
  CHECK(gw.calls() == 8);
  for (const auto& e : data) CHECK(e.label == rule_by_id(e.rule_id).label);
  const auto prompt = render_synth_prompt(builtin_rules()[0], "copper", "How much copper?", 3);
  CHECK(text::contains(prompt, "copper"));
  CHECK(text::contains(prompt, builtin_rules()[0].description));
}
