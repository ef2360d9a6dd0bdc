#include <doctest.h>

#include <algorithm>
#include <set>

#include "helpers.hpp"
#include "probekit/errors.hpp"
#include "probekit/gateway.hpp"
#include "probekit/prompts.hpp"
#include "probekit/text.hpp"
#include "probekit/usersim.hpp"

using namespace probekit;
using namespace probekit::usersim;

namespace {

SimulatorProfile profile(Combination instructions, bool follow_up = true) {
  SimulatorProfile p;
  p.id = "p1";
  p.query_script = reveal_script("How did crude oil inventories change in 2022?", follow_up);
  p.target = {"t", "What was the average quarterly gas storage withdrawal in 2022?",
              "The average was 460 billion cubic feet per quarter.", ""};
  p.instructions = std::move(instructions);
  return p;
}

// A polite, on-topic, single-question probe.
Utterance on_topic_probe(const SimulatorProfile& p) {
  return Utterance::agent("Inventories of crude oil fell in 2022. Since you mention crude oil, " +
                          p.target.question);
}

}  // namespace

TEST_CASE("instruction catalog") {
  const auto& c = instruction_catalog();
  CHECK(c.size() == 8);
  std::set<int> ids;
  for (const auto& i : c) {
    ids.insert(i.id);
    CHECK_FALSE(i.text.empty());
  }
  CHECK(ids == std::set<int>{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(text::contains(instruction(7).text, "private or sensitive information"));
  CHECK_THROWS_AS(instruction(9), ValidationError);
}

TEST_CASE("combination enumeration") {
  const auto all = enumerate_combinations();
  CHECK(all.size() == 254);
  CHECK(std::set<Combination>(all.begin(), all.end()).size() == 254);
  CHECK(enumerate_combinations(1, 1).size() == 8);
  CHECK(enumerate_combinations(8, 8).size() == 1);
  CHECK(enumerate_combinations(8, 8).front() == Combination{1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(all.front() == Combination{1});
  CHECK(all.back() == Combination{2, 3, 4, 5, 6, 7, 8});
  CHECK_THROWS_AS(enumerate_combinations(0, 3), ValidationError);

  const auto a = split_train_test(all, 11);
  const auto b = split_train_test(all, 11);
  CHECK(a.train == b.train);
  CHECK(a.test == b.test);
  CHECK(a.train.size() == 127);
  CHECK(a.test.size() == 127);
  std::set<Combination> tr(a.train.begin(), a.train.end());
  for (const auto& c : a.test) CHECK(tr.count(c) == 0);
  CHECK_THROWS_AS(split_train_test(enumerate_combinations(1, 1), 1), ValidationError);
}

TEST_CASE("profile validation and persistence") {
  auto p = profile({2, 5});
  CHECK_NOTHROW(p.validate());
  auto bad = p;
  bad.instructions = {5, 2};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.instructions = {};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.instructions = {1, 2, 3, 4, 5, 6, 7, 8};
  CHECK_THROWS_AS(bad.validate(), ValidationError);

  const auto dir = testing::fresh_dir("usersim");
  save_profiles({p, profile({1})}, dir / "profiles.jsonl");
  const auto loaded = load_profiles(dir / "profiles.jsonl");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0] == p);
}

TEST_CASE("reveal script") {
  const auto s = reveal_script("What was the dividend payout ratio in 2021?", false);
  REQUIRE(s.size() == 2);
  CHECK(s[0].rfind("Hi, I have a question about", 0) == 0);
  CHECK(s[1] == "What was the dividend payout ratio in 2021?");
  CHECK(reveal_script("x?", true).size() == 3);
}

TEST_CASE("probe on turn 1 under distrust is refused") {
  const auto p = profile({8});
  auto [state, opening] = start_session(p);
  CHECK(opening.text == p.query_script[0]);
  const auto r = simulate_reply(state, on_topic_probe(p), true, 1);
  REQUIRE(r.reply.annotations);
  CHECK(r.reply.annotations->is_refusal);
  CHECK_FALSE(r.reply.annotations->reveals_target);
  CHECK(r.reply.text.rfind(std::string(prompts::kRefusalSentence), 0) == 0);
  CHECK(r.state.last_probe_trigger == 8);
  CHECK(r.state.satisfaction < state.satisfaction);
}

TEST_CASE("probe without resistance reveals the reference answer") {
  auto p = profile({5});
  auto [state, opening] = start_session(p);
  auto r = simulate_reply(state, Utterance::agent("Sure, oil rose."), false, 1);
  r = simulate_reply(r.state, on_topic_probe(p), true, 2);
  REQUIRE(r.reply.annotations);
  CHECK(r.reply.annotations->reveals_target);
  CHECK(text::contains(r.reply.text, p.target.reference_answer));
}

TEST_CASE("non-probe turns reveal the next fragment") {
  const auto p = profile({1}, true);
  auto [state, opening] = start_session(p);
  auto r = simulate_reply(state, Utterance::agent("Happy to help."), false, 1);
  CHECK(r.reply.text == p.query_script[1]);
  CHECK(r.state.fragments_revealed == 2);
  r = simulate_reply(r.state, Utterance::agent("Inventories fell."), false, 2);
  CHECK(r.reply.text == p.query_script[2]);
  CHECK_FALSE(r.reply.annotations->reveals_target);
}

TEST_CASE("individual triggers") {
  auto p = profile({7});
  auto [state, opening] = start_session(p);
  CHECK(refusal_trigger(state, Utterance::agent("What is your salary?")) == 7);
  CHECK(refusal_trigger(state, Utterance::agent("What is your salaryman view?")) == std::nullopt);

  p = profile({6});
  state = start_session(p).first;
  CHECK(refusal_trigger(state, Utterance::agent("Why? And how?")) == 6);
  CHECK(refusal_trigger(state, Utterance::agent("Why?")) == std::nullopt);

  p = profile({4});
  state = start_session(p).first;
  std::string long_msg;
  for (int i = 0; i < 61; ++i) long_msg += "word ";
  CHECK(refusal_trigger(state, Utterance::agent(long_msg + "?")) == 4);

  p = profile({2});
  state = start_session(p).first;
  CHECK(refusal_trigger(state, Utterance::agent("Do you like football?")) == 2);
  CHECK(refusal_trigger(state, Utterance::agent("About crude oil inventories, what changed?")) ==
        std::nullopt);

  p = profile({3});
  state = start_session(p).first;
  CHECK(refusal_trigger(state, on_topic_probe(p)) == 3);
  state.fragments_revealed = static_cast<int>(p.query_script.size());
  CHECK(refusal_trigger(state, on_topic_probe(p)) == std::nullopt);

  p = profile({1});
  state = start_session(p).first;
  state.probes_seen = 2;
  CHECK(refusal_trigger(state, on_topic_probe(p)) == 1);
}

TEST_CASE("probe without a question mark is ignored") {
  const auto p = profile({1});
  auto [state, opening] = start_session(p);
  const auto r = simulate_reply(state, Utterance::agent("Tell me your figure."), true, 1);
  CHECK_FALSE(r.reply.annotations->is_refusal);
  CHECK_FALSE(r.reply.annotations->reveals_target);
  CHECK(r.state.probes_seen == 1);
}

TEST_CASE("user ends the session after patience runs out") {
  auto p = profile({1}, false);
  p.patience = 2;
  RuleSimulator sim(p);
  sim.open();
  sim.reply(Utterance::agent("a"), false, 1);  // fragment 2
  auto r = sim.reply(Utterance::agent("b"), false, 2);
  CHECK_FALSE(r.annotations->ends_session);
  r = sim.reply(Utterance::agent("c"), false, 3);
  CHECK(r.annotations->ends_session);
  CHECK(sim.ended());
  CHECK_THROWS_AS(sim.reply(Utterance::agent("d"), false, 4), StateError);
}

TEST_CASE("every combination is solvable by waiting, then probing on topic") {
  // Within 8 turns, some probe turn k reveals the target for each subset.
  for (const auto& combo : enumerate_combinations()) {
    const auto p = profile(combo);
    bool solved = false;
    for (int k = 1; k <= 8 && !solved; ++k) {
      auto [state, opening] = start_session(p);
      for (int t = 1; t < k && !state.ended; ++t) {
        state = simulate_reply(state, Utterance::agent("Crude oil inventories fell."), false,
                               static_cast<std::uint64_t>(t))
                    .state;
      }
      if (state.ended) break;
      const auto r = simulate_reply(state, on_topic_probe(p), true, 99);
      solved = r.reply.annotations->reveals_target;
    }
    INFO("combination size " << combo.size());
    CHECK(solved);
  }
}

TEST_CASE("scripted simulator") {
  const auto p = profile({1});
  ScriptedSimulator sim(p, {ScriptedProbeReply::Refuse, ScriptedProbeReply::Reveal});
  sim.open();
  auto r = sim.reply(Utterance::agent("x?"), true, 1);
  CHECK(r.annotations->is_refusal);
  r = sim.reply(Utterance::agent("y?"), true, 2);
  CHECK(r.annotations->reveals_target);
}

TEST_CASE("LLM simulator renders instructions and swaps roles") {
  auto p = profile({2, 7});
  const auto prompt = render_simulator_prompt(p);
  CHECK(text::contains(prompt, "- " + instruction(2).text));
  CHECK(text::contains(prompt, "- " + instruction(7).text));

  auto mock = std::make_unique<gateway::MockBackend>(1);
  std::vector<gateway::ChatRequest> seen;
  mock->add_rule("capture", [](const gateway::ChatRequest&) { return true; },
                 [&seen](const gateway::ChatRequest& r) {
                   seen.push_back(r);
                   return std::string("Sure, tell me more?");
                 });
  gateway::Gateway gw(std::move(mock), 2);
  LlmSimulator sim(p, gw);
  CHECK(sim.open().text == p.query_script[0]);
  const auto r = sim.reply(Utterance::agent("Oil fell."), false, 1);
  CHECK(r.text == "Sure, tell me more?");
  CHECK_FALSE(r.annotations.has_value());
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].messages.front().role == gateway::Role::System);
  // The agent's message is presented to the simulator model as the user turn.
  CHECK(seen[0].messages.back().role == gateway::Role::User);
  CHECK(seen[0].messages.back().content == "Oil fell.");
}
