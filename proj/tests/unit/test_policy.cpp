#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "probekit/errors.hpp"
#include "probekit/policy.hpp"
#include "probekit/prompts.hpp"

using namespace probekit;
using namespace probekit::policy;

namespace {

FeatureVector random_features(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureVector x;
  x.values.resize(num_features());
  for (auto& v : x.values) v = n(rng);
  return x;
}

}  // namespace

TEST_CASE("feature layout") {
  CHECK(feature_names().size() == num_features());
  CHECK(feature_index("bias") == 0);
  CHECK_THROWS_AS(feature_index("nope"), ValidationError);
}

TEST_CASE("features of the first turn") {
  DialogueHistory h({Utterance::user("How are yields?")}, {});
  const auto f = extract_features(h, testing::sample_target());
  CHECK(f[feature_index("bias")] == 1.0);
  CHECK(f[feature_index("turn_index")] == 1.0);
  CHECK(f[feature_index("consecutive_waits")] == 0.0);
  CHECK(f[feature_index("probe_count")] == 0.0);
  CHECK(f[feature_index("last_user_question")] == 1.0);
  CHECK(f == extract_features(h, testing::sample_target()));
}

TEST_CASE("refusal sentence sets the refusal feature") {
  DialogueHistory h({Utterance::user("Tell me about rates."), Utterance::agent("What is your salary?"),
                     Utterance::user(std::string(prompts::kRefusalSentence))},
                    {Decision::Probe});
  const auto f = extract_features(h, testing::sample_target());
  CHECK(f[feature_index("last_user_refusal")] == 1.0);
  CHECK(f[feature_index("rejected_count")] == 1.0);
  CHECK(f[feature_index("last_rejected")] == 1.0);
  CHECK(f[feature_index("probe_count")] == 1.0);
  CHECK(f[feature_index("turn_index")] == 2.0);
}

TEST_CASE("decide") {
  DialogueHistory h({Utterance::user("hello")}, {});
  const auto x = extract_features(h, testing::sample_target());
  auto zero = PolicyParams::zeros();
  auto d = decide(zero, x, DecideMode::greedy());
  CHECK(d.prob_probe == 0.5);
  CHECK(d.decision == Decision::Wait);

  auto strong = PolicyParams::zeros();
  strong.at(Decision::Probe, 0) = 10.0;
  d = decide(strong, x, DecideMode::greedy());
  CHECK(d.prob_probe > 0.9999);
  CHECK(d.decision == Decision::Probe);

  auto mid = PolicyParams::zeros();
  mid.at(Decision::Probe, 0) = 0.1;
  for (std::uint64_t s = 0; s < 20; ++s) {
    CHECK(decide(mid, x, DecideMode::sample(s)).decision ==
          decide(mid, x, DecideMode::sample(s)).decision);
  }

  auto wrong = PolicyParams::zeros(3);
  CHECK_THROWS_AS(decide(wrong, x, DecideMode::greedy()), ConfigError);
  auto other = x;
  other.version = "v0";
  CHECK_THROWS_AS(decide(zero, other, DecideMode::greedy()), ConfigError);
}

TEST_CASE("score function") {
  std::mt19937_64 rng(1);
  const auto x = random_features(rng);
  const auto zero = PolicyParams::zeros();
  const std::size_t n = num_features();
  for (Decision d : {Decision::Wait, Decision::Probe}) {
    const auto g = grad_log_prob(zero, x, d);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(g[i] == doctest::Approx((d == Decision::Wait ? 0.5 : -0.5) * x[i]));
      CHECK(g[n + i] == doctest::Approx((d == Decision::Probe ? 0.5 : -0.5) * x[i]));
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    auto p = PolicyParams::zeros();
    for (auto& w : p.weights) w = normal(rng);
    const auto y = random_features(rng);
    const auto probs = action_probs(p, y);
    const auto gp = grad_log_prob(p, y, Decision::Probe);
    const auto gw = grad_log_prob(p, y, Decision::Wait);
    for (std::size_t i = 0; i < gp.size(); ++i) {
      CHECK(std::abs(probs.probe * gp[i] + probs.wait * gw[i]) < 1e-12);
    }
    for (std::size_t i = 0; i < gp.size(); ++i) {
      auto plus = p, minus = p;
      plus.weights[i] += 1e-5;
      minus.weights[i] -= 1e-5;
      const double fd = (log_prob(plus, y, Decision::Probe) - log_prob(minus, y, Decision::Probe)) / 2e-5;
      CHECK(std::abs(fd - gp[i]) <= 1e-4 * std::max({std::abs(fd), std::abs(gp[i]), 1e-3}));
    }
  }
}

TEST_CASE("REINFORCE step") {
  std::mt19937_64 rng(2);
  const auto x = random_features(rng);
  const auto p = PolicyParams::zeros();
  CHECK(apply_reinforce_step(p, x, Decision::Probe, 0.0, 0.1) == p);
  const auto up = apply_reinforce_step(p, x, Decision::Probe, 1.0, 0.1);
  CHECK(action_probs(up, x).probe > 0.5);
  CHECK_THROWS_AS(apply_reinforce_step(p, x, Decision::Probe, NAN, 0.1), NumericError);

  // Two features, weights w_wait = (0.2, -0.1), w_probe = (0.4, 0.3), x = (1, 2).
  // Logits: wait 0.0, probe 1.0; pi_probe = 1 / (1 + e^-1).
  PolicyParams two = PolicyParams::zeros(2);
  two.weights = {0.2, -0.1, 0.4, 0.3};
  FeatureVector f;
  f.values = {1.0, 2.0};
  const double pp = 1.0 / (1.0 + std::exp(-1.0));
  const double scale = 0.5 * 1.5;  // lr * G
  const auto next = apply_reinforce_step(two, f, Decision::Probe, 1.5, 0.5);
  const std::vector<double> expected{0.2 - scale * (1 - pp) * 1.0, -0.1 - scale * (1 - pp) * 2.0,
                                     0.4 + scale * (1 - pp) * 1.0, 0.3 + scale * (1 - pp) * 2.0};
  for (std::size_t i = 0; i < 4; ++i) {
    INFO(i, " ", next.weights[i], " ", expected[i]);
    CHECK(std::abs(next.weights[i] - expected[i]) < 1e-12);
  }
}

TEST_CASE("SFT on a separable set") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t k = feature_index("target_overlap");
  std::vector<FeaturedExample> data;
  while (data.size() < 600) {
    FeaturedExample e;
    e.features.values.resize(num_features());
    for (auto& v : e.features.values) v = 0.1 * normal(rng);
    e.features.values[0] = 1.0;
    const double v = normal(rng);
    if (std::abs(v) < 0.5) continue;
    e.features.values[k] = v;
    e.label = v > 0 ? Decision::Probe : Decision::Wait;
    data.push_back(e);
  }
  SftConfig cfg;
  cfg.seed = 4;
  const auto [params, log] = sft_train(std::span<const FeaturedExample>(data), cfg);
  CHECK(std::abs(log.initial_loss - std::log(2.0)) < 1e-9);
  CHECK(mean_bce(PolicyParams::zeros(), data) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(accuracy(params, data) >= 0.99);
  CHECK(log.epochs.size() == 5);
  CHECK(log.best_epoch >= 1);

  // Held-out examples drawn the same way.
  std::vector<FeaturedExample> held;
  while (held.size() < 200) {
    FeaturedExample e;
    e.features.values.resize(num_features());
    for (auto& v : e.features.values) v = 0.1 * normal(rng);
    e.features.values[0] = 1.0;
    const double v = normal(rng);
    if (std::abs(v) < 0.5) continue;
    e.features.values[k] = v;
    e.label = v > 0 ? Decision::Probe : Decision::Wait;
    held.push_back(e);
  }
  CHECK(accuracy(params, held) >= 0.99);

  const auto again = sft_train(std::span<const FeaturedExample>(data), cfg);
  CHECK(again.first == params);

  std::vector<FeaturedExample> one_class(data.begin(), data.begin() + 1);
  CHECK_THROWS_AS(sft_train(std::span<const FeaturedExample>(one_class), cfg), TrainingError);
  CHECK_THROWS_AS(sft_train(std::span<const FeaturedExample>(), cfg), TrainingError);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = testing::fresh_dir("policy");
  auto p = PolicyParams::zeros();
  p.weights[3] = 0.125;
  save_checkpoint(p, dir / "p.json");
  CHECK(load_checkpoint(dir / "p.json") == p);
  auto j = to_json(p);
  j["feature_version"] = "v9";
  CHECK_THROWS_AS(params_from_json(j), ConfigError);
}
