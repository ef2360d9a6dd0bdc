#include "probekit/rl.hpp"

#include <cmath>
#include <fstream>

#include "probekit/errors.hpp"
#include "probekit/random.hpp"

namespace probekit::rl {

double Episode::total_reward() const {
  double s = 0.0;
  for (const auto& st : steps) s += st.reward;
  return s;
}

bool Episode::success() const {
  for (const auto& st : steps) {
    if (st.outcome == reward::StepOutcome::SuccessProbe) return true;
  }
  return false;
}

int Episode::probes() const {
  int n = 0;
  for (const auto& st : steps) n += st.decision == Decision::Probe ? 1 : 0;
  return n;
}

int Episode::rejected() const {
  int n = 0;
  for (const auto& st : steps) n += st.outcome == reward::StepOutcome::RejectedProbe ? 1 : 0;
  return n;
}

RolloutResult run_session(const StrategySource& strategy, usersim::UserSimulator& simulator,
                          gateway::Gateway& gateway, const RolloutConfig& config,
                          std::uint64_t seed, const std::string& session_id) {
  const bool prochatip = config.agent == agents::AgentKind::ProChatIp;
  if (prochatip && strategy.params == nullptr && strategy.remote == nullptr) {
    throw ConfigError("ProChatIp rollout needs policy parameters or a remote strategy");
  }
  const auto& profile = simulator.profile();
  RolloutResult result;
  result.session = open_session(session_id, profile.target, profile.query(), config.max_turns);
  auto& session = result.session;

  Utterance user = simulator.open();
  std::optional<reward::StepOutcome> previous;
  for (int t = 1; session.status == SessionStatus::Active; ++t) {
    try {
      const auto history = history_with_pending(session, user);
      EpisodeStep step;
      step.features = policy::extract_features(history, profile.target);
      std::optional<Decision> decision;
      if (prochatip) {
        policy::DecisionResult d;
        if (strategy.params) {
          const auto mode = config.sample
                                ? policy::DecideMode::sample(mix_seed(seed, static_cast<std::uint64_t>(t)))
                                : policy::DecideMode::greedy();
          d = policy::decide(*strategy.params, step.features, mode);
        } else {
          d = strategy.remote->decide(history, profile.target, mix_seed(seed, t));
        }
        decision = d.decision;
        step.prob_probe = d.prob_probe;
        if (strategy.params) {
          step.log_prob = policy::log_prob(*strategy.params, step.features, d.decision);
        }
      }
      auto out = agents::respond(config.agent, gateway, history, profile.target, decision,
                                 mix_seed(seed, 1000 + static_cast<std::uint64_t>(t)));
      step.decision = decision.value_or(out.strategy.value_or(Decision::Wait));
      if (!prochatip) step.prob_probe = step.decision == Decision::Probe ? 1.0 : 0.0;
      auto agent = Utterance::agent(out.response_text);

      auto reply = simulator.reply(agent, step.decision == Decision::Probe,
                                   mix_seed(seed, 2000 + static_cast<std::uint64_t>(t)));
      if (!reply.annotations && config.judge) {
        auto ann = config.judge(profile.target, user, step.decision, agent, reply);
        if (step.decision != Decision::Probe) ann.reveals_target = false;
        reply.annotations = ann;
      }
      step.outcome = reward::classify(step.decision, effective_annotations(reply), previous);
      step.reward = reward::reward_of(step.outcome, config.reward);
      previous = step.outcome;
      result.episode.steps.push_back(std::move(step));

      session = append_turn(std::move(session), user, result.episode.steps.back().decision,
                            std::move(agent), reply);
      user = std::move(reply);
    } catch (const TransportError& e) {
      throw TransportError("session " + session_id + " turn " + std::to_string(t) + ": " +
                           e.what());
    }
  }
  return result;
}

RolloutResult rollout(const policy::PolicyParams& params, usersim::UserSimulator& simulator,
                      gateway::Gateway& gateway, const RolloutConfig& config, std::uint64_t seed,
                      const std::string& session_id) {
  auto cfg = config;
  cfg.agent = agents::AgentKind::ProChatIp;
  return run_session(StrategySource{&params, nullptr}, simulator, gateway, cfg, seed, session_id);
}

// ---------------------------------------------------------------------------

ProfileEnvironment::ProfileEnvironment(std::vector<usersim::SimulatorProfile> profiles,
                                       std::vector<usersim::Combination> train_combinations,
                                       std::vector<usersim::Combination> eval_combinations,
                                       std::size_t eval_episodes, int max_turns)
    : profiles_(std::move(profiles)),
      train_(std::move(train_combinations)),
      eval_(std::move(eval_combinations)),
      eval_episodes_(eval_episodes),
      max_turns_(max_turns) {
  if (profiles_.empty()) throw ValidationError("environment needs at least one profile");
  if (train_.empty()) throw ValidationError("environment train split is empty");
  if (eval_episodes_ > 0 && eval_.empty()) throw ValidationError("environment eval split is empty");
}

std::unique_ptr<usersim::UserSimulator> ProfileEnvironment::sample_train(std::uint64_t seed) {
  Rng rng(seed);
  auto profile = profiles_[rng.index(profiles_.size())];
  profile.instructions = train_[rng.index(train_.size())];
  return std::make_unique<usersim::RuleSimulator>(std::move(profile));
}

usersim::SimulatorProfile ProfileEnvironment::eval_profile(std::size_t i) const {
  auto profile = profiles_[i % profiles_.size()];
  profile.instructions = eval_[i % eval_.size()];
  return profile;
}

std::unique_ptr<usersim::UserSimulator> ProfileEnvironment::eval_simulator(std::size_t i) {
  return std::make_unique<usersim::RuleSimulator>(eval_profile(i));
}

namespace {

usersim::SimulatorProfile scripted_profile() {
  usersim::SimulatorProfile p;
  p.id = "scripted";
  p.query_script = {"Can you walk me through the latest copper price moves?"};
  p.target = TargetInfo{"scripted-target", "How many tonnes of copper will you buy next quarter?",
                        "About 40 thousand tonnes.", ""};
  p.instructions = {1};
  return p;
}

}  // namespace

ScriptedEnvironment::ScriptedEnvironment(std::vector<usersim::ScriptedProbeReply> table,
                                         std::size_t eval_episodes)
    : table_(std::move(table)), eval_episodes_(eval_episodes) {
  if (table_.empty()) throw ValidationError("scripted environment needs at least one turn");
}

std::unique_ptr<usersim::UserSimulator> ScriptedEnvironment::sample_train(std::uint64_t) {
  return std::make_unique<usersim::ScriptedSimulator>(scripted_profile(), table_);
}

std::unique_ptr<usersim::UserSimulator> ScriptedEnvironment::eval_simulator(std::size_t) {
  return std::make_unique<usersim::ScriptedSimulator>(scripted_profile(), table_);
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (!std::isfinite(learning_rate) || learning_rate < 0) {
    throw ConfigError("learning rate must be finite and >= 0");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (max_turns < 1) throw ConfigError("max_turns must be >= 1");
  if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
  reward.validate();
}

Json TrainConfig::to_json() const {
  return Json{{"episodes", episodes},         {"learning_rate", learning_rate},
              {"gamma", gamma},               {"max_turns", max_turns},
              {"seed", seed},                 {"eval_every", eval_every},
              {"baseline", baseline},         {"reward", reward.to_json()},
              {"divergence_limit", divergence_limit}};
}

EvalResult evaluate(const policy::PolicyParams& params, Environment& env,
                    gateway::Gateway& gateway, const reward::RewardConfig& reward) {
  EvalResult r;
  int successes = 0, probes = 0, rejected = 0;
  double total = 0.0;
  RolloutConfig cfg;
  cfg.max_turns = env.max_turns();
  cfg.reward = reward;
  cfg.sample = false;
  for (std::size_t i = 0; i < env.eval_size(); ++i) {
    auto sim = env.eval_simulator(i);
    auto res = rollout(params, *sim, gateway, cfg, mix_seed(0xe7a1, i), "eval-" + std::to_string(i));
    ++r.episodes;
    successes += res.episode.success() ? 1 : 0;
    probes += res.episode.probes();
    rejected += res.episode.rejected();
    total += res.episode.total_reward();
  }
  if (r.episodes > 0) {
    r.tsr = static_cast<double>(successes) / r.episodes;
    r.mean_reward = total / r.episodes;
  }
  r.rpr = probes > 0 ? static_cast<double>(rejected) / probes : 0.0;
  return r;
}

void TrainLog::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write train log " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
  if (!out) throw IoError("failed writing train log " + path.string());
}

std::pair<policy::PolicyParams, TrainLog> train(const policy::PolicyParams& initial,
                                                const TrainConfig& config, Environment& env,
                                                gateway::Gateway& gateway,
                                                const CheckpointHook& on_eval) {
  config.validate();
  auto params = initial;
  TrainLog log;
  RolloutConfig cfg;
  cfg.max_turns = std::min(config.max_turns, env.max_turns());
  cfg.reward = config.reward;
  cfg.sample = true;
  double baseline_sum = 0.0;

  for (int ep = 0; ep < config.episodes; ++ep) {
    const auto seed = mix_seed(config.seed, static_cast<std::uint64_t>(ep));
    auto sim = env.sample_train(seed);
    auto res = rollout(params, *sim, gateway, cfg, seed, "train-" + std::to_string(ep));
    std::vector<double> rewards;
    for (const auto& st : res.episode.steps) rewards.push_back(st.reward);
    const auto G = reward::returns(rewards, config.gamma);
    const double b = config.baseline && ep > 0 ? baseline_sum / ep : 0.0;

    Json steps = Json::array();
    std::map<std::string, int> histogram;
    for (std::size_t t = 0; t < res.episode.steps.size(); ++t) {
      const auto& st = res.episode.steps[t];
      auto next = policy::apply_reinforce_step(params, st.features, st.decision, G[t] - b,
                                               config.learning_rate);
      double delta = 0.0;
      for (std::size_t i = 0; i < next.weights.size(); ++i) {
        delta += (next.weights[i] - params.weights[i]) * (next.weights[i] - params.weights[i]);
        if (std::abs(next.weights[i]) > config.divergence_limit) {
          throw NumericError("training diverged at episode " + std::to_string(ep + 1) +
                             ": a weight exceeded " + std::to_string(config.divergence_limit));
        }
      }
      params = std::move(next);
      ++histogram[std::string(reward::to_string(st.outcome))];
      steps.push_back(Json{{"t", t + 1},
                           {"decision", to_int(st.decision)},
                           {"prob_probe", st.prob_probe},
                           {"outcome", reward::to_string(st.outcome)},
                           {"reward", st.reward},
                           {"return", G[t]},
                           {"delta_norm", std::sqrt(delta)}});
    }
    if (!G.empty()) baseline_sum += G.front();

    Json record{{"episode", ep + 1},
                {"mode", "sample"},
                {"total_reward", res.episode.total_reward()},
                {"turns", res.episode.steps.size()},
                {"success", res.episode.success()},
                {"outcomes", histogram},
                {"steps", std::move(steps)}};
    if (config.eval_every > 0 && (ep + 1) % config.eval_every == 0) {
      const auto ev = evaluate(params, env, gateway, config.reward);
      record["eval"] = Json{{"mode", "greedy"},
                            {"episodes", ev.episodes},
                            {"tsr", ev.tsr},
                            {"rpr", ev.rpr},
                            {"mean_reward", ev.mean_reward}};
      if (on_eval) on_eval(ep + 1, params);
    }
    log.records.push_back(std::move(record));
  }
  return {std::move(params), std::move(log)};
}

}  // namespace probekit::rl
