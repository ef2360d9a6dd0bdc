#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "probekit/dialogue.hpp"

namespace probekit::policy {

inline constexpr std::string_view kFeatureVersion = "v1";

// Names of the v1 features, in vector order.
const std::vector<std::string>& feature_names();
std::size_t num_features();

// Index of a named v1 feature; throws ValidationError for unknown names.
std::size_t feature_index(std::string_view name);

struct FeatureVector {
  std::string version{kFeatureVersion};
  std::vector<double> values;

  double operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const { return values.size(); }
  bool operator==(const FeatureVector&) const = default;
};

// Deterministic features of (h_t, I). See feature_names() for the layout.
FeatureVector extract_features(const DialogueHistory& history, const TargetInfo& target);

// Linear two-action softmax policy. Row 0 scores Wait, row 1 scores Probe.
struct PolicyParams {
  std::string version{kFeatureVersion};
  std::size_t num_features = 0;
  std::vector<double> weights;  // 2 * num_features, row-major by action

  static PolicyParams zeros(std::size_t num_features = policy::num_features());

  double& at(Decision action, std::size_t feature) {
    return weights[static_cast<std::size_t>(to_int(action)) * num_features + feature];
  }
  double at(Decision action, std::size_t feature) const {
    return weights[static_cast<std::size_t>(to_int(action)) * num_features + feature];
  }
  bool operator==(const PolicyParams&) const = default;
};

// Same shape as PolicyParams::weights.
using Gradient = std::vector<double>;

struct DecideMode {
  enum class Kind { Greedy, Sample };
  Kind kind = Kind::Greedy;
  std::uint64_t seed = 0;

  static DecideMode greedy() { return {Kind::Greedy, 0}; }
  static DecideMode sample(std::uint64_t seed) { return {Kind::Sample, seed}; }
};

struct ActionProbs {
  double wait = 0.5;
  double probe = 0.5;
};

struct DecisionResult {
  Decision decision = Decision::Wait;
  double prob_probe = 0.5;
};

// Throws ConfigError when params and features disagree on version or size.
void check_compatible(const PolicyParams& params, const FeatureVector& features);

ActionProbs action_probs(const PolicyParams& params, const FeatureVector& features);

// Greedy: Probe iff prob_probe > 0.5 (0.5 exactly -> Wait).
// Sample: Bernoulli(prob_probe) drawn from the given seed.
DecisionResult decide(const PolicyParams& params, const FeatureVector& features, DecideMode mode);

double log_prob(const PolicyParams& params, const FeatureVector& features, Decision decision);

// d/dtheta log pi(decision | features) = (onehot(decision) - pi) (x) features.
Gradient grad_log_prob(const PolicyParams& params, const FeatureVector& features,
                       Decision decision);

// params + learning_rate * return_value * grad_log_prob(params, features, decision).
// Throws NumericError on non-finite inputs.
PolicyParams apply_reinforce_step(const PolicyParams& params, const FeatureVector& features,
                                  Decision decision, double return_value, double learning_rate);

struct LabeledExample {
  DialogueHistory history;
  TargetInfo target;
  Decision label = Decision::Wait;
  std::string rule_id;
};

struct FeaturedExample {
  FeatureVector features;
  Decision label = Decision::Wait;
};

struct SftConfig {
  std::size_t batch_size = 5;
  double learning_rate = 2e-5;
  int epochs = 5;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct SftEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct SftLog {
  double initial_loss = 0.0;
  std::vector<SftEpoch> epochs;
  int best_epoch = 0;

  Json to_json() const;
};

// Mean binary cross-entropy of the Probe probability against the labels.
double mean_bce(const PolicyParams& params, std::span<const FeaturedExample> data);
double accuracy(const PolicyParams& params, std::span<const FeaturedExample> data);

// Mini-batch gradient descent on binary cross-entropy. Returns the checkpoint
// with the best validation accuracy (earliest on ties). Throws TrainingError on
// an empty or single-class dataset.
std::pair<PolicyParams, SftLog> sft_train(std::span<const FeaturedExample> data,
                                          const SftConfig& config);
std::pair<PolicyParams, SftLog> sft_train(std::span<const LabeledExample> data,
                                          const SftConfig& config);

Json to_json(const PolicyParams& params);
PolicyParams params_from_json(const Json& j);
void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
// Throws ConfigError when the checkpoint's feature version differs from v1.
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace probekit::policy
