#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "probekit/dialogue.hpp"

namespace probekit::reward {

enum class StepOutcome {
  SuccessProbe,
  RejectedProbe,
  InvalidProbe,
  SmartStop,
  Mitigation,
  PassivePenalty,
  Neutral,
};

inline constexpr std::array<StepOutcome, 7> kAllOutcomes{
    StepOutcome::SuccessProbe, StepOutcome::RejectedProbe,  StepOutcome::InvalidProbe,
    StepOutcome::SmartStop,    StepOutcome::Mitigation,     StepOutcome::PassivePenalty,
    StepOutcome::Neutral};

std::string_view to_string(StepOutcome o);
StepOutcome outcome_from_string(std::string_view s);

struct RewardConfig {
  double success = 2.0;
  double rejected = -1.0;
  double invalid = -0.2;
  double smart_stop = 1.5;
  double mitigation = 0.3;
  double passive_penalty = -2.0;
  double neutral = 0.0;
  double gamma = 0.99;

  // Throws ConfigError on non-finite constants or gamma outside (0, 1].
  void validate() const;
  Json to_json() const;
  static RewardConfig from_json(const Json& j);
};

// Probe turns are judged on the reply that follows them; Wait turns on the
// outcome of the previous turn.
StepOutcome classify(Decision decision, const Annotations& reply,
                     std::optional<StepOutcome> previous);

double reward_of(StepOutcome outcome, const RewardConfig& config);

// G_t = r_t + gamma * G_{t+1}, computed backwards. Accepts gamma in [0, 1].
std::vector<double> returns(std::span<const double> rewards, double gamma);

}  // namespace probekit::reward
