#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "probekit/agents.hpp"
#include "probekit/dialogue.hpp"
#include "probekit/policy.hpp"
#include "probekit/reward.hpp"
#include "probekit/usersim.hpp"

namespace probekit::rl {

struct EpisodeStep {
  policy::FeatureVector features;
  Decision decision = Decision::Wait;
  double prob_probe = 0.5;
  double log_prob = 0.0;
  reward::StepOutcome outcome = reward::StepOutcome::Neutral;
  double reward = 0.0;
};

struct Episode {
  std::vector<EpisodeStep> steps;
  double total_reward() const;
  bool success() const;
  int probes() const;
  int rejected() const;
};

// Supplies annotations for a simulator reply that carries none (LLM simulator).
using ReplyJudge = std::function<Annotations(const TargetInfo& target, const Utterance& user,
                                             Decision decision, const Utterance& agent,
                                             const Utterance& reply)>;

struct RolloutConfig {
  agents::AgentKind agent = agents::AgentKind::ProChatIp;
  int max_turns = kDefaultMaxTurns;
  reward::RewardConfig reward;
  // ProChatIp decisions: sampled (training) or greedy (evaluation).
  bool sample = true;
  ReplyJudge judge;
};

// Where ProChatIp decisions come from: local parameters or a remote classifier.
struct StrategySource {
  const policy::PolicyParams* params = nullptr;
  agents::RemoteStrategy* remote = nullptr;
};

struct RolloutResult {
  Episode episode;
  DialogueSession session;
};

// One session: simulator reply -> features -> decision -> agent response ->
// outcome -> reward, until success, the turn cap, or the user ends it.
// Transport failures are rethrown with the turn index.
RolloutResult run_session(const StrategySource& strategy, usersim::UserSimulator& simulator,
                          gateway::Gateway& gateway, const RolloutConfig& config,
                          std::uint64_t seed, const std::string& session_id);

// ProChatIp rollout with local parameters.
RolloutResult rollout(const policy::PolicyParams& params, usersim::UserSimulator& simulator,
                      gateway::Gateway& gateway, const RolloutConfig& config, std::uint64_t seed,
                      const std::string& session_id = "episode");

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::unique_ptr<usersim::UserSimulator> sample_train(std::uint64_t seed) = 0;
  virtual std::size_t eval_size() const = 0;
  virtual std::unique_ptr<usersim::UserSimulator> eval_simulator(std::size_t i) = 0;
  virtual int max_turns() const = 0;
};

// Base profiles combined with instruction subsets: random train combinations
// per episode, a fixed round-robin of eval combinations for evaluation.
class ProfileEnvironment final : public Environment {
 public:
  ProfileEnvironment(std::vector<usersim::SimulatorProfile> profiles,
                     std::vector<usersim::Combination> train_combinations,
                     std::vector<usersim::Combination> eval_combinations,
                     std::size_t eval_episodes, int max_turns = kDefaultMaxTurns);
  std::unique_ptr<usersim::UserSimulator> sample_train(std::uint64_t seed) override;
  std::size_t eval_size() const override { return eval_episodes_; }
  std::unique_ptr<usersim::UserSimulator> eval_simulator(std::size_t i) override;
  int max_turns() const override { return max_turns_; }

  usersim::SimulatorProfile eval_profile(std::size_t i) const;

 private:
  std::vector<usersim::SimulatorProfile> profiles_;
  std::vector<usersim::Combination> train_;
  std::vector<usersim::Combination> eval_;
  std::size_t eval_episodes_;
  int max_turns_;
};

// Fixed per-turn probe answers, e.g. {Refuse, Reveal}: a probe at turn 1 is
// refused, a probe at turn 2 succeeds.
class ScriptedEnvironment final : public Environment {
 public:
  ScriptedEnvironment(std::vector<usersim::ScriptedProbeReply> table, std::size_t eval_episodes);
  std::unique_ptr<usersim::UserSimulator> sample_train(std::uint64_t seed) override;
  std::size_t eval_size() const override { return eval_episodes_; }
  std::unique_ptr<usersim::UserSimulator> eval_simulator(std::size_t i) override;
  int max_turns() const override { return static_cast<int>(table_.size()); }

 private:
  std::vector<usersim::ScriptedProbeReply> table_;
  std::size_t eval_episodes_;
};

struct TrainConfig {
  int episodes = 500;
  double learning_rate = 1e-5;
  double gamma = 0.99;
  int max_turns = kDefaultMaxTurns;
  std::uint64_t seed = 0;
  int eval_every = 50;
  bool baseline = false;  // subtract the running mean episode return
  reward::RewardConfig reward;
  double divergence_limit = 1e6;

  void validate() const;
  Json to_json() const;
};

struct EvalResult {
  int episodes = 0;
  double tsr = 0.0;
  double rpr = 0.0;
  double mean_reward = 0.0;
};

// Greedy rollouts over the environment's eval simulators.
EvalResult evaluate(const policy::PolicyParams& params, Environment& env,
                    gateway::Gateway& gateway, const reward::RewardConfig& reward);

struct TrainLog {
  std::vector<Json> records;  // one per episode
  void save(const std::filesystem::path& path) const;
};

using CheckpointHook = std::function<void(int episode, const policy::PolicyParams&)>;

// REINFORCE with per-step updates in turn order using G_t. Throws NumericError
// when a weight exceeds the divergence limit.
std::pair<policy::PolicyParams, TrainLog> train(const policy::PolicyParams& initial,
                                                const TrainConfig& config, Environment& env,
                                                gateway::Gateway& gateway,
                                                const CheckpointHook& on_eval = {});

}  // namespace probekit::rl
