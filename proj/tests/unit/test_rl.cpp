#include <doctest.h>

#include "helpers.hpp"
#include "probekit/agents.hpp"
#include "probekit/errors.hpp"
#include "probekit/gateway.hpp"
#include "probekit/rl.hpp"
#include "probekit/text.hpp"

using namespace probekit;
using namespace probekit::rl;
using usersim::ScriptedProbeReply;

namespace {

std::unique_ptr<gateway::Gateway> mock_gateway() {
  auto mock = std::make_unique<gateway::MockBackend>(0);
  agents::install_mock_scripts(*mock);
  return std::make_unique<gateway::Gateway>(std::move(mock), 2);
}

usersim::SimulatorProfile profile(usersim::Combination instructions = {5}) {
  usersim::SimulatorProfile p;
  p.id = "p";
  p.query_script = usersim::reveal_script("How did crude oil inventories change in 2022?", true);
  p.target = {"t", "What was the average quarterly gas storage withdrawal in 2022?",
              "The average was 460 billion cubic feet per quarter.", ""};
  p.instructions = std::move(instructions);
  return p;
}

policy::PolicyParams always(Decision d) {
  auto p = policy::PolicyParams::zeros();
  p.at(d, 0) = 50.0;
  return p;
}

class FailingBackend final : public gateway::Backend {
 public:
  std::string complete(const gateway::ChatRequest&) override { throw TransportError("boom"); }
  std::vector<double> embed(const std::string&) override { throw TransportError("boom"); }
};

}  // namespace

TEST_CASE("immediate success") {
  auto gw = mock_gateway();
  usersim::ScriptedSimulator sim(profile(), {ScriptedProbeReply::Reveal});
  RolloutConfig cfg;
  cfg.sample = false;
  const auto r = rollout(always(Decision::Probe), sim, *gw, cfg, 1);
  REQUIRE(r.episode.steps.size() == 1);
  CHECK(r.episode.steps[0].outcome == reward::StepOutcome::SuccessProbe);
  CHECK(r.episode.total_reward() == 2.0);
  CHECK(r.episode.success());
  CHECK(r.session.status == SessionStatus::SuccessTerminated);
}

TEST_CASE("waiting forever is penalized") {
  auto gw = mock_gateway();
  usersim::RuleSimulator sim(profile());
  RolloutConfig cfg;
  cfg.sample = false;
  const auto r = rollout(always(Decision::Wait), sim, *gw, cfg, 1);
  CHECK(r.episode.steps.size() <= 8);
  CHECK((r.session.status == SessionStatus::MaxTurnsReached ||
         r.session.status == SessionStatus::UserEnded));
  CHECK(r.episode.steps[0].outcome == reward::StepOutcome::Neutral);
  for (std::size_t t = 1; t < r.episode.steps.size(); ++t) {
    CHECK(r.episode.steps[t].outcome == reward::StepOutcome::PassivePenalty);
  }
  CHECK(r.episode.probes() == 0);
}

TEST_CASE("rollouts are deterministic") {
  auto gw = mock_gateway();
  auto params = policy::PolicyParams::zeros();
  params.at(Decision::Probe, 1) = 0.3;
  RolloutConfig cfg;
  std::vector<std::string> runs;
  for (int k = 0; k < 2; ++k) {
    usersim::RuleSimulator sim(profile({2, 8}));
    runs.push_back(encode_session(rollout(params, sim, *gw, cfg, 77, "same").session));
  }
  CHECK(runs[0] == runs[1]);
}

TEST_CASE("every agent kind runs a session") {
  auto gw = mock_gateway();
  for (auto kind : agents::kAllAgents) {
    usersim::RuleSimulator sim(profile({8}));
    RolloutConfig cfg;
    cfg.agent = kind;
    const auto params = policy::PolicyParams::zeros();
    const auto r = run_session(StrategySource{&params, nullptr}, sim, *gw, cfg, 3,
                               std::string(agents::to_string(kind)));
    CHECK_FALSE(r.session.turns.empty());
    if (kind == agents::AgentKind::Vanilla) CHECK(r.episode.probes() == 0);
  }
  usersim::RuleSimulator sim(profile());
  RolloutConfig cfg;
  CHECK_THROWS_AS(run_session(StrategySource{}, sim, *gw, cfg, 1, "x"), ConfigError);
}

TEST_CASE("transport failures name the session and turn") {
  gateway::Gateway gw(std::make_unique<FailingBackend>(), 1);
  usersim::RuleSimulator sim(profile());
  RolloutConfig cfg;
  try {
    rollout(policy::PolicyParams::zeros(), sim, gw, cfg, 1, "s-9");
    FAIL("expected TransportError");
  } catch (const TransportError& e) {
    CHECK(text::contains(e.what(), "session s-9 turn 1"));
  }
}

TEST_CASE("two-turn scripted environment") {
  auto gw = mock_gateway();
  ScriptedEnvironment env({ScriptedProbeReply::Refuse, ScriptedProbeReply::Reveal}, 4);
  CHECK(env.max_turns() == 2);

  // Hand-derived returns of the four deterministic plans.
  auto plan_return = [&](Decision first, Decision second) {
    auto sim = env.eval_simulator(0);
    auto p = policy::PolicyParams::zeros();
    // turn_index is 1 then 2: weight it so the sign flips between turns.
    const auto ti = policy::feature_index("turn_index");
    const double s1 = first == Decision::Probe ? 1.0 : -1.0;
    const double s2 = second == Decision::Probe ? 1.0 : -1.0;
    p.at(Decision::Probe, 0) = 10.0 * (2.0 * s1 - s2);
    p.at(Decision::Probe, ti) = 10.0 * (s2 - s1);
    RolloutConfig cfg;
    cfg.sample = false;
    cfg.max_turns = 2;
    const auto r = rollout(p, *sim, *gw, cfg, 1);
    std::vector<double> rewards;
    for (const auto& st : r.episode.steps) rewards.push_back(st.reward);
    return reward::returns(rewards, 0.99).front();
  };
  const double best = plan_return(Decision::Wait, Decision::Probe);
  CHECK(best == doctest::Approx(1.98));
  CHECK(plan_return(Decision::Probe, Decision::Probe) == doctest::Approx(-1.0 + 0.99 * 2.0));
  CHECK(plan_return(Decision::Probe, Decision::Wait) < best);
  CHECK(plan_return(Decision::Wait, Decision::Wait) < best);
}

TEST_CASE("REINFORCE learns Wait then Probe") {
  auto gw = mock_gateway();
  double first = 0.0, last = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ScriptedEnvironment env({ScriptedProbeReply::Refuse, ScriptedProbeReply::Reveal}, 20);
    TrainConfig tc;
    tc.episodes = 2000;
    tc.learning_rate = 0.1;
    tc.max_turns = 2;
    tc.seed = seed;
    tc.eval_every = 500;
    int hooks = 0;
    const auto [params, log] = train(policy::PolicyParams::zeros(), tc, env, *gw,
                                     [&hooks](int, const policy::PolicyParams&) { ++hooks; });
    CHECK(hooks == 4);
    CHECK(log.records.size() == 2000);
    CHECK(log.records[499].contains("eval"));
    // Greedy plan on every eval profile: Wait at turn 1, Probe at turn 2.
    int optimal = 0;
    for (std::size_t i = 0; i < env.eval_size(); ++i) {
      auto sim = env.eval_simulator(i);
      RolloutConfig cfg;
      cfg.sample = false;
      cfg.max_turns = 2;
      const auto r = rollout(params, *sim, *gw, cfg, i);
      if (r.episode.steps.size() == 2 && r.episode.steps[0].decision == Decision::Wait &&
          r.episode.steps[1].decision == Decision::Probe) {
        ++optimal;
      }
    }
    CHECK(optimal >= 19);
    for (int e = 0; e < 200; ++e) {
      first += log.records[static_cast<std::size_t>(e)]["total_reward"].get<double>();
      last += log.records[static_cast<std::size_t>(1800 + e)]["total_reward"].get<double>();
    }
  }
  CHECK(last >= first);
}

TEST_CASE("training edge cases") {
  auto gw = mock_gateway();
  ScriptedEnvironment env({ScriptedProbeReply::Refuse, ScriptedProbeReply::Reveal}, 2);
  TrainConfig tc;
  tc.episodes = 20;
  tc.learning_rate = 0.0;
  tc.eval_every = 0;
  auto start = policy::PolicyParams::zeros();
  start.weights[2] = 0.25;
  CHECK(train(start, tc, env, *gw).first == start);

  tc.learning_rate = 1e9;
  tc.divergence_limit = 1e3;
  CHECK_THROWS_AS(train(start, tc, env, *gw), NumericError);

  tc.episodes = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("profile environment") {
  auto gw = mock_gateway();
  const auto combos = usersim::enumerate_combinations();
  const auto split = usersim::split_train_test(combos, 1);
  ProfileEnvironment env({profile()}, split.train, split.test, 3);
  CHECK(env.eval_size() == 3);
  CHECK(env.eval_profile(1).instructions == split.test[1]);
  const auto res = evaluate(always(Decision::Wait), env, *gw, reward::RewardConfig{});
  CHECK(res.episodes == 3);
  CHECK(res.tsr == 0.0);
  CHECK_THROWS_AS(ProfileEnvironment({}, split.train, split.test, 1), ValidationError);

  const auto dir = testing::fresh_dir("rl");
  TrainConfig tc;
  tc.episodes = 10;
  tc.eval_every = 5;
  const auto [params, log] = train(policy::PolicyParams::zeros(), tc, env, *gw);
  log.save(dir / "log.jsonl");
  CHECK(std::filesystem::file_size(dir / "log.jsonl") > 0);
}
