#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "probekit/agents.hpp"
#include "probekit/corpus.hpp"
#include "probekit/evalkit.hpp"
#include "probekit/gateway.hpp"
#include "probekit/policy.hpp"
#include "probekit/reward.hpp"
#include "probekit/rl.hpp"
#include "probekit/synthgen.hpp"
#include "probekit/usersim.hpp"

namespace probekit::pipeline {

enum class JudgeMode { Auto, Rule, Llm };
enum class SimulatorMode { Rule, Llm };

struct RunConfig {
  gateway::BackendConfig backend;
  agents::AgentKind agent = agents::AgentKind::ProChatIp;
  // Explicit checkpoint for ProChatIp; defaults to the rl-train output, then
  // the sft output.
  std::filesystem::path policy_checkpoint;
  bool remote_strategy = false;
  reward::RewardConfig reward;
  rl::TrainConfig train;
  policy::SftConfig sft;
  synth::SynthConfig synth;
  std::filesystem::path corpus_path = "data/toy_corpus.jsonl";
  // Pair file; built from the corpus into the output directory when empty.
  std::filesystem::path pairs_path;
  std::size_t pairs = 100;
  std::size_t eval_episodes = 20;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 7;
  JudgeMode judge = JudgeMode::Auto;
  SimulatorMode simulator = SimulatorMode::Rule;
  bool synth_llm = false;

  // Referenced input paths must exist (ConfigError otherwise).
  void validate() const;
  Json to_json() const;
};

// Artifact locations under output_dir.
struct Paths {
  std::filesystem::path root;
  std::filesystem::path dataset() const { return root / "dataset.jsonl"; }
  std::filesystem::path sft_policy() const { return root / "sft_policy.json"; }
  std::filesystem::path sft_log() const { return root / "sft_log.json"; }
  std::filesystem::path rl_policy() const { return root / "rl_policy.json"; }
  std::filesystem::path train_log() const { return root / "train_log.jsonl"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path pairs() const { return root / "pairs.jsonl"; }
  std::filesystem::path transcripts(agents::AgentKind k) const;
  std::filesystem::path verdicts(agents::AgentKind k) const;
  std::filesystem::path metrics(agents::AgentKind k) const;
  std::filesystem::path report_json() const { return root / "report.json"; }
  std::filesystem::path report_txt() const { return root / "report.txt"; }
  std::filesystem::path report_csv() const { return root / "report.csv"; }
};

Paths paths_for(const RunConfig& config);

// Gateway for the configured backend. In mock mode every module's scripts are
// installed on a MockBackend seeded from the config.
std::unique_ptr<gateway::Gateway> make_gateway(const RunConfig& config);

// Registers every scripted reply the offline pipeline needs.
void install_mock_scripts(gateway::MockBackend& backend, const RunConfig& config);

using Logger = std::function<void(const std::string&)>;

std::filesystem::path synth_data(const RunConfig& config, gateway::Gateway& gw, const Logger& log);
std::filesystem::path sft(const RunConfig& config, const Logger& log);
std::filesystem::path rl_train(const RunConfig& config, gateway::Gateway& gw, const Logger& log);

// Pairs from pairs_path, or built from the corpus (and saved) when unset.
std::vector<corpus::PairSpec> load_or_make_pairs(const RunConfig& config, const Logger& log);

// Simulator profile for pair i; the instruction subset comes from `combos`.
usersim::SimulatorProfile make_profile(const corpus::PairSpec& pair, std::size_t index,
                                       std::uint64_t seed,
                                       const std::vector<usersim::Combination>& combos);

// Policy for ProChatIp per the lookup order in RunConfig. Throws ConfigError
// naming the command that produces the missing checkpoint.
policy::PolicyParams resolve_policy(const RunConfig& config);

std::vector<DialogueSession> simulate(const RunConfig& config, agents::AgentKind agent,
                                      gateway::Gateway& gw, const Logger& log);

struct Evaluation {
  std::vector<std::vector<eval::JudgeVerdict>> verdicts;
  std::vector<eval::SessionMetrics> sessions;
  eval::AggregateMetrics aggregate;
};

Evaluation evaluate_sessions(const RunConfig& config, const std::vector<DialogueSession>& sessions,
                             gateway::Gateway& gw);
Evaluation evaluate(const RunConfig& config, agents::AgentKind agent, gateway::Gateway& gw,
                    const Logger& log);

std::vector<DialogueSession> load_transcripts(const std::filesystem::path& path);
void save_transcripts(const std::vector<DialogueSession>& sessions,
                      const std::filesystem::path& path);

// Table over all four agents. Agents without metrics are simulated and
// evaluated first.
std::vector<eval::ReportRow> report(const RunConfig& config, gateway::Gateway& gw,
                                    const Logger& log);

}  // namespace probekit::pipeline
