#include "probekit/reward.hpp"

#include <cmath>
#include <string>

#include "probekit/errors.hpp"

namespace probekit::reward {

std::string_view to_string(StepOutcome o) {
  switch (o) {
    case StepOutcome::SuccessProbe: return "SuccessProbe";
    case StepOutcome::RejectedProbe: return "RejectedProbe";
    case StepOutcome::InvalidProbe: return "InvalidProbe";
    case StepOutcome::SmartStop: return "SmartStop";
    case StepOutcome::Mitigation: return "Mitigation";
    case StepOutcome::PassivePenalty: return "PassivePenalty";
    case StepOutcome::Neutral: return "Neutral";
  }
  return "Neutral";
}

StepOutcome outcome_from_string(std::string_view s) {
  for (auto o : kAllOutcomes) {
    if (to_string(o) == s) return o;
  }
  throw ValidationError("unknown step outcome '" + std::string(s) + "'");
}

void RewardConfig::validate() const {
  for (double v : {success, rejected, invalid, smart_stop, mitigation, passive_penalty, neutral}) {
    if (!std::isfinite(v)) throw ConfigError("reward constants must be finite");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
}

Json RewardConfig::to_json() const {
  return Json{{"success", success},         {"rejected", rejected},
              {"invalid", invalid},         {"smart_stop", smart_stop},
              {"mitigation", mitigation},   {"passive_penalty", passive_penalty},
              {"neutral", neutral},         {"gamma", gamma}};
}

RewardConfig RewardConfig::from_json(const Json& j) {
  RewardConfig c;
  c.success = j.value("success", c.success);
  c.rejected = j.value("rejected", c.rejected);
  c.invalid = j.value("invalid", c.invalid);
  c.smart_stop = j.value("smart_stop", c.smart_stop);
  c.mitigation = j.value("mitigation", c.mitigation);
  c.passive_penalty = j.value("passive_penalty", c.passive_penalty);
  c.neutral = j.value("neutral", c.neutral);
  c.gamma = j.value("gamma", c.gamma);
  c.validate();
  return c;
}

StepOutcome classify(Decision decision, const Annotations& reply,
                     std::optional<StepOutcome> previous) {
  if (decision == Decision::Probe) {
    if (reply.reveals_target) return StepOutcome::SuccessProbe;
    if (reply.is_refusal) return StepOutcome::RejectedProbe;
    return StepOutcome::InvalidProbe;
  }
  if (!previous) return StepOutcome::Neutral;
  switch (*previous) {
    case StepOutcome::RejectedProbe: return StepOutcome::SmartStop;
    case StepOutcome::InvalidProbe: return StepOutcome::Mitigation;
    // Success terminates the episode; only reachable with termination disabled.
    case StepOutcome::SuccessProbe: return StepOutcome::Neutral;
    case StepOutcome::SmartStop:
    case StepOutcome::Mitigation:
    case StepOutcome::PassivePenalty:
    case StepOutcome::Neutral: return StepOutcome::PassivePenalty;
  }
  return StepOutcome::Neutral;
}

double reward_of(StepOutcome outcome, const RewardConfig& config) {
  switch (outcome) {
    case StepOutcome::SuccessProbe: return config.success;
    case StepOutcome::RejectedProbe: return config.rejected;
    case StepOutcome::InvalidProbe: return config.invalid;
    case StepOutcome::SmartStop: return config.smart_stop;
    case StepOutcome::Mitigation: return config.mitigation;
    case StepOutcome::PassivePenalty: return config.passive_penalty;
    case StepOutcome::Neutral: return config.neutral;
  }
  return config.neutral;
}

std::vector<double> returns(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

}  // namespace probekit::reward
