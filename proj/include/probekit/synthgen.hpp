#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "probekit/dialogue.hpp"
#include "probekit/policy.hpp"

namespace probekit::gateway {
class Gateway;
class MockBackend;
}  // namespace probekit::gateway

namespace probekit::synth {

struct GoverningRule {
  std::string id;
  Decision label = Decision::Wait;  // Ask -> Probe, Answer -> Wait
  std::string description;
};

// Four Ask rules followed by four Answer rules.
const std::vector<GoverningRule>& builtin_rules();
const GoverningRule& rule_by_id(std::string_view id);

struct SynthTarget {
  std::string question;  // contains "{topic}"
  std::string answer;    // contains "{n}"
};

struct Lexicon {
  std::vector<std::string> topics;
  std::vector<SynthTarget> targets;

  static const Lexicon& builtin();
};

struct SynthConfig {
  int sessions = 600;
  std::uint64_t seed = 0;
  int min_user_turns = 2;
  int max_user_turns = 4;
  Lexicon lexicon = Lexicon::builtin();

  void validate() const;
  Json to_json() const;
};

struct SynthSample {
  // Completed turns plus the decisive user utterance as the pending reply.
  DialogueSession fragment;
  policy::LabeledExample example;
  std::string topic;
};

SynthSample generate_session(const GoverningRule& rule, const SynthConfig& config,
                             std::uint64_t seed);
SynthSample generate_session(std::string_view rule_id, const SynthConfig& config,
                             std::uint64_t seed);

// Same contract, but the transcript is written by the gateway LLM from the
// rule-conditioned instruction. Agent lines that ask something count as probes.
SynthSample generate_session_llm(const GoverningRule& rule, const SynthConfig& config,
                                 std::uint64_t seed, gateway::Gateway& gateway);

// Rule id whose condition the utterance instantiates, by the cue phrases the
// templates use. Used as the self-consistency check on generated data.
std::optional<std::string> match_condition(std::string_view final_user_utterance);

// Rules cycled as i % 8; session i uses seed mix_seed(config.seed, i).
std::vector<policy::LabeledExample> generate_dataset(const SynthConfig& config,
                                                     gateway::Gateway* llm = nullptr);

// Prompt used by the LLM-backed mode.
std::string render_synth_prompt(const GoverningRule& rule, const std::string& topic,
                                const std::string& target_question, int user_turns);

// Scripted reply for render_synth_prompt() requests: the template generator's
// transcript in "user:"/"assistant:" lines.
void install_mock_script(gateway::MockBackend& backend, const SynthConfig& config);

Json to_json(const policy::LabeledExample& e);
policy::LabeledExample example_from_json(const Json& j);
void save_dataset(const std::vector<policy::LabeledExample>& data,
                  const std::filesystem::path& path);
std::vector<policy::LabeledExample> load_dataset(const std::filesystem::path& path);

}  // namespace probekit::synth
