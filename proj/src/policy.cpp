#include "probekit/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "probekit/errors.hpp"
#include "probekit/random.hpp"
#include "probekit/reward.hpp"
#include "probekit/text.hpp"

namespace probekit::policy {
namespace {

enum Feature : std::size_t {
  kBias,
  kTurnIndex,
  kProbeCount,
  kRejectedCount,
  kInvalidCount,
  kLastRejected,
  kLastInvalid,
  kLastWait,
  kConsecutiveWaits,
  kLastUserRefusal,
  kLastUserQuestion,
  kTargetOverlap,
  kProbeRatio,
  kFeatureCount,
};

double dot(std::span<const double> w, std::span<const double> x) {
  return std::inner_product(x.begin(), x.end(), w.begin(), 0.0);
}

// Logits (wait, probe).
std::pair<double, double> logits(const PolicyParams& p, const FeatureVector& f) {
  const std::span<const double> w(p.weights);
  const auto n = p.num_features;
  return {dot(w.subspan(0, n), f.values), dot(w.subspan(n, n), f.values)};
}

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + " contains a non-finite value");
  }
}

}  // namespace

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names{
      "bias",           "turn_index",       "probe_count",       "rejected_count",
      "invalid_count",  "last_rejected",    "last_invalid",      "last_wait",
      "consecutive_waits", "last_user_refusal", "last_user_question", "target_overlap",
      "probe_ratio"};
  return names;
}

std::size_t num_features() { return kFeatureCount; }

std::size_t feature_index(std::string_view name) {
  const auto& names = feature_names();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError("unknown feature '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names.begin());
}

FeatureVector extract_features(const DialogueHistory& history, const TargetInfo& target) {
  FeatureVector f;
  f.values.assign(kFeatureCount, 0.0);
  f.values[kBias] = 1.0;
  f.values[kTurnIndex] = static_cast<double>(history.turn_index());

  const auto& decisions = history.decisions();
  std::optional<reward::StepOutcome> previous;
  int probes = 0, rejected = 0, invalid = 0;
  for (std::size_t k = 0; k < decisions.size(); ++k) {
    const auto reply = effective_annotations(history.user_after(k));
    previous = reward::classify(decisions[k], reply, previous);
    if (decisions[k] == Decision::Probe) ++probes;
    if (*previous == reward::StepOutcome::RejectedProbe) ++rejected;
    if (*previous == reward::StepOutcome::InvalidProbe) ++invalid;
  }
  int trailing_waits = 0;
  for (auto it = decisions.rbegin(); it != decisions.rend() && *it == Decision::Wait; ++it) {
    ++trailing_waits;
  }

  f.values[kProbeCount] = probes;
  f.values[kRejectedCount] = rejected;
  f.values[kInvalidCount] = invalid;
  if (previous) {
    f.values[kLastRejected] = *previous == reward::StepOutcome::RejectedProbe ? 1.0 : 0.0;
    f.values[kLastInvalid] = *previous == reward::StepOutcome::InvalidProbe ? 1.0 : 0.0;
    f.values[kLastWait] = decisions.back() == Decision::Wait ? 1.0 : 0.0;
  }
  f.values[kConsecutiveWaits] = trailing_waits;

  const auto last = effective_annotations(history.last_user());
  f.values[kLastUserRefusal] = last.is_refusal ? 1.0 : 0.0;
  f.values[kLastUserQuestion] = last.contains_question ? 1.0 : 0.0;

  std::string recent = history.last_user().text;
  if (history.entries().size() >= 3) {
    recent += " " + history.entries()[history.entries().size() - 3].text;
  }
  f.values[kTargetOverlap] = text::token_overlap(target.question, recent);
  f.values[kProbeRatio] =
      decisions.empty() ? 0.0 : static_cast<double>(probes) / static_cast<double>(decisions.size());
  return f;
}

PolicyParams PolicyParams::zeros(std::size_t n) {
  PolicyParams p;
  p.num_features = n;
  p.weights.assign(2 * n, 0.0);
  return p;
}

void check_compatible(const PolicyParams& params, const FeatureVector& features) {
  if (params.version != features.version) {
    throw ConfigError("policy version '" + params.version + "' does not match feature version '" +
                      features.version + "'");
  }
  if (params.num_features != features.size() || params.weights.size() != 2 * params.num_features) {
    throw ConfigError("policy expects " + std::to_string(params.num_features) +
                      " features, got " + std::to_string(features.size()));
  }
}

ActionProbs action_probs(const PolicyParams& params, const FeatureVector& features) {
  check_compatible(params, features);
  const auto [zw, zp] = logits(params, features);
  const double m = std::max(zw, zp);
  const double ew = std::exp(zw - m);
  const double ep = std::exp(zp - m);
  const double total = ew + ep;
  return {ew / total, ep / total};
}

DecisionResult decide(const PolicyParams& params, const FeatureVector& features, DecideMode mode) {
  const auto probs = action_probs(params, features);
  DecisionResult r;
  r.prob_probe = probs.probe;
  if (mode.kind == DecideMode::Kind::Greedy) {
    r.decision = probs.probe > 0.5 ? Decision::Probe : Decision::Wait;
  } else {
    Rng rng(mode.seed);
    r.decision = rng.uniform01() < probs.probe ? Decision::Probe : Decision::Wait;
  }
  return r;
}

double log_prob(const PolicyParams& params, const FeatureVector& features, Decision decision) {
  check_compatible(params, features);
  const auto [zw, zp] = logits(params, features);
  const double m = std::max(zw, zp);
  const double lse = m + std::log(std::exp(zw - m) + std::exp(zp - m));
  return (decision == Decision::Probe ? zp : zw) - lse;
}

Gradient grad_log_prob(const PolicyParams& params, const FeatureVector& features,
                       Decision decision) {
  const auto probs = action_probs(params, features);
  const auto n = params.num_features;
  Gradient g(2 * n);
  const double coef_wait = (decision == Decision::Wait ? 1.0 : 0.0) - probs.wait;
  const double coef_probe = (decision == Decision::Probe ? 1.0 : 0.0) - probs.probe;
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = coef_wait * features[i];
    g[n + i] = coef_probe * features[i];
  }
  return g;
}

PolicyParams apply_reinforce_step(const PolicyParams& params, const FeatureVector& features,
                                  Decision decision, double return_value, double learning_rate) {
  if (!std::isfinite(return_value)) throw NumericError("return value is not finite");
  if (!std::isfinite(learning_rate)) throw NumericError("learning rate is not finite");
  check_finite(params.weights, "policy weights");
  check_finite(features.values, "feature vector");
  const auto g = grad_log_prob(params, features, decision);
  PolicyParams out = params;
  const double scale = learning_rate * return_value;
  for (std::size_t i = 0; i < g.size(); ++i) out.weights[i] += scale * g[i];
  return out;
}

Json SftLog::to_json() const {
  Json epochs_json = Json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back(Json{{"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"train_accuracy", e.train_accuracy},
                               {"val_loss", e.val_loss},
                               {"val_accuracy", e.val_accuracy}});
  }
  return Json{{"initial_loss", initial_loss}, {"best_epoch", best_epoch}, {"epochs", epochs_json}};
}

double mean_bce(const PolicyParams& params, std::span<const FeaturedExample> data) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : data) total -= log_prob(params, ex.features, ex.label);
  return total / static_cast<double>(data.size());
}

double accuracy(const PolicyParams& params, std::span<const FeaturedExample> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    correct += decide(params, ex.features, DecideMode::greedy()).decision == ex.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::pair<PolicyParams, SftLog> sft_train(std::span<const FeaturedExample> data,
                                          const SftConfig& config) {
  if (data.empty()) throw TrainingError("sft_train: dataset is empty");
  const bool has_probe = std::any_of(data.begin(), data.end(),
                                     [](const auto& e) { return e.label == Decision::Probe; });
  const bool has_wait = std::any_of(data.begin(), data.end(),
                                    [](const auto& e) { return e.label == Decision::Wait; });
  if (!has_probe || !has_wait) {
    throw TrainingError("sft_train: dataset contains a single class (both Probe and Wait labels are required)");
  }
  if (config.batch_size == 0) throw TrainingError("sft_train: batch size must be positive");
  if (config.epochs < 1) throw TrainingError("sft_train: epochs must be >= 1");
  if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0)) {
    throw TrainingError("sft_train: validation fraction must lie in [0, 1)");
  }

  const std::size_t n_features = data.front().features.size();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(mix_seed(config.seed, 0));
  split_rng.shuffle(order);

  auto n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(data.size())));
  if (config.validation_fraction > 0.0 && data.size() >= 2) n_val = std::max<std::size_t>(n_val, 1);
  n_val = std::min(n_val, data.size() - 1);

  std::vector<FeaturedExample> val;
  std::vector<FeaturedExample> train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val : train).push_back(data[order[i]]);
  }

  PolicyParams params = PolicyParams::zeros(n_features);
  params.version = data.front().features.version;

  SftLog log;
  log.initial_loss = mean_bce(params, train);
  PolicyParams best = params;
  double best_acc = -1.0;

  Rng epoch_rng(mix_seed(config.seed, 1));
  std::vector<std::size_t> idx(train.size());
  Gradient grad(2 * n_features);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(idx.begin(), idx.end(), 0);
    epoch_rng.shuffle(idx);
    for (std::size_t start = 0; start < idx.size(); start += config.batch_size) {
      const std::size_t end = std::min(idx.size(), start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const auto& ex = train[idx[b]];
        // Cross-entropy gradient is the negative score function of the label.
        const auto g = grad_log_prob(params, ex.features, ex.label);
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] -= g[i];
      }
      const double scale = config.learning_rate / static_cast<double>(end - start);
      for (std::size_t i = 0; i < grad.size(); ++i) params.weights[i] -= scale * grad[i];
    }
    check_finite(params.weights, "policy weights");

    SftEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = mean_bce(params, train);
    rec.train_accuracy = accuracy(params, train);
    rec.val_loss = val.empty() ? rec.train_loss : mean_bce(params, val);
    rec.val_accuracy = val.empty() ? rec.train_accuracy : accuracy(params, val);
    log.epochs.push_back(rec);
    if (rec.val_accuracy > best_acc) {
      best_acc = rec.val_accuracy;
      best = params;
      log.best_epoch = epoch;
    }
  }
  return {best, log};
}

std::pair<PolicyParams, SftLog> sft_train(std::span<const LabeledExample> data,
                                          const SftConfig& config) {
  std::vector<FeaturedExample> featured;
  featured.reserve(data.size());
  for (const auto& ex : data) featured.push_back({extract_features(ex.history, ex.target), ex.label});
  return sft_train(std::span<const FeaturedExample>(featured), config);
}

Json to_json(const PolicyParams& params) {
  const auto n = params.num_features;
  std::vector<double> wait(params.weights.begin(), params.weights.begin() + static_cast<long>(n));
  std::vector<double> probe(params.weights.begin() + static_cast<long>(n), params.weights.end());
  return Json{{"format", "probekit-policy"},
              {"feature_version", params.version},
              {"num_features", n},
              {"feature_names", feature_names()},
              {"weights", Json{{"wait", wait}, {"probe", probe}}}};
}

PolicyParams params_from_json(const Json& j) {
  if (j.value("format", "") != "probekit-policy") throw ConfigError("not a policy checkpoint");
  PolicyParams p;
  p.version = j.at("feature_version").get<std::string>();
  if (p.version != kFeatureVersion) {
    throw ConfigError("checkpoint feature version '" + p.version + "' does not match extractor '" +
                      std::string(kFeatureVersion) + "'");
  }
  p.num_features = j.at("num_features").get<std::size_t>();
  auto wait = j.at("weights").at("wait").get<std::vector<double>>();
  auto probe = j.at("weights").at("probe").get<std::vector<double>>();
  if (wait.size() != p.num_features || probe.size() != p.num_features ||
      p.num_features != num_features()) {
    throw ConfigError("checkpoint weight shape does not match the v1 feature set");
  }
  p.weights = std::move(wait);
  p.weights.insert(p.weights.end(), probe.begin(), probe.end());
  check_finite(p.weights, "checkpoint weights");
  return p;
}

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << to_json(params).dump(2) << '\n';
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return params_from_json(j);
}

}  // namespace probekit::policy
