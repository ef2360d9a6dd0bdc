#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "probekit/dialogue.hpp"

namespace probekit::gateway {
class Gateway;
}

namespace probekit::usersim {

struct BehavioralInstruction {
  int id = 0;
  std::string text;
};

// The eight resistance conditions, ids 1..8.
const std::vector<BehavioralInstruction>& instruction_catalog();
const BehavioralInstruction& instruction(int id);

using Combination = std::vector<int>;

// Every subset of sizes k_min..k_max, ordered by size then lexicographically.
std::vector<Combination> enumerate_combinations(int k_min = 1, int k_max = 7);

struct CombinationSplit {
  std::vector<Combination> train;
  std::vector<Combination> test;
};

// Seeded shuffle, then halve. Requires exactly 254 combinations.
CombinationSplit split_train_test(const std::vector<Combination>& combinations,
                                  std::uint64_t seed);

inline constexpr int kProbeRepeatLimit = 2;
inline constexpr double kTopicOverlapThreshold = 0.1;
inline constexpr std::size_t kComplexTokenLimit = 60;
inline constexpr int kTrustTurn = 3;
inline constexpr double kSatisfactionStep = 0.5;
inline constexpr double kSatisfactionFloor = 1.0;

// Terms that make a probe count as asking for private information.
const std::vector<std::string>& sensitive_terms();

struct SimulatorProfile {
  std::string id;
  std::vector<std::string> query_script;  // q_1 split into reveal order
  TargetInfo target;
  Combination instructions;
  double satisfaction = 5.0;
  // Non-probe turns tolerated after the query is fully revealed.
  int patience = 6;

  void validate() const;
  // Full query (fragments joined).
  std::string query() const;
  bool operator==(const SimulatorProfile&) const = default;
};

Json to_json(const SimulatorProfile& p);
SimulatorProfile profile_from_json(const Json& j);
void save_profiles(const std::vector<SimulatorProfile>& profiles, const std::filesystem::path& path);
std::vector<SimulatorProfile> load_profiles(const std::filesystem::path& path);

// Splits a question into a two- or three-fragment reveal script. The first
// fragment names the topic, the second asks the question, the optional third
// asks a follow-up.
std::vector<std::string> reveal_script(const std::string& question, bool with_follow_up);

struct SimulatorState {
  SimulatorProfile profile;
  int fragments_revealed = 0;
  int turn = 0;          // agent messages answered so far
  int probes_seen = 0;
  int idle_turns = 0;    // non-probe turns after the query ran out
  double satisfaction = 5.0;
  std::optional<int> last_probe_trigger;
  bool revealed = false;
  bool ended = false;
};

// Initial state and the opening utterance u_1 (the first fragment).
std::pair<SimulatorState, Utterance> start_session(const SimulatorProfile& profile);

// First active instruction whose trigger matches a probe at the state's next
// turn, or nullopt when the probe would be accepted.
std::optional<int> refusal_trigger(const SimulatorState& state, const Utterance& agent_message);

struct SimReply {
  Utterance reply;
  SimulatorState state;
};

// Rule-based reply with annotations. A probe without a question mark is
// ignored: the simulator keeps revealing its query.
SimReply simulate_reply(const SimulatorState& state, const Utterance& agent_message,
                        bool agent_probed, std::uint64_t seed);

class UserSimulator {
 public:
  virtual ~UserSimulator() = default;
  virtual Utterance open() = 0;
  virtual Utterance reply(const Utterance& agent_message, bool agent_probed,
                          std::uint64_t seed) = 0;
  virtual bool ended() const = 0;
  // True when replies carry authoritative annotations.
  virtual bool annotates() const = 0;
  virtual const SimulatorProfile& profile() const = 0;
};

class RuleSimulator final : public UserSimulator {
 public:
  explicit RuleSimulator(SimulatorProfile profile);
  Utterance open() override;
  Utterance reply(const Utterance& agent_message, bool agent_probed, std::uint64_t seed) override;
  bool ended() const override { return state_.ended; }
  bool annotates() const override { return true; }
  const SimulatorProfile& profile() const override { return state_.profile; }
  const SimulatorState& state() const { return state_; }

 private:
  SimulatorState state_;
  Utterance opening_;
};

// Fixed per-turn answer to probes; used for hand-solvable environments.
enum class ScriptedProbeReply { Reveal, Refuse, Ignore };

class ScriptedSimulator final : public UserSimulator {
 public:
  // probe_table[k] answers a probe at turn k+1; turns past the table refuse.
  ScriptedSimulator(SimulatorProfile profile, std::vector<ScriptedProbeReply> probe_table);
  Utterance open() override;
  Utterance reply(const Utterance& agent_message, bool agent_probed, std::uint64_t seed) override;
  bool ended() const override { return ended_; }
  bool annotates() const override { return true; }
  const SimulatorProfile& profile() const override { return profile_; }

 private:
  SimulatorProfile profile_;
  std::vector<ScriptedProbeReply> table_;
  int turn_ = 0;
  bool ended_ = false;
};

// Renders the user-simulator prompt with the profile's instructions and asks
// the gateway for each reply. Replies carry no annotations.
class LlmSimulator final : public UserSimulator {
 public:
  LlmSimulator(SimulatorProfile profile, gateway::Gateway& gateway);
  Utterance open() override;
  Utterance reply(const Utterance& agent_message, bool agent_probed, std::uint64_t seed) override;
  bool ended() const override { return false; }
  bool annotates() const override { return false; }
  const SimulatorProfile& profile() const override { return profile_; }

  std::string system_prompt() const;

 private:
  SimulatorProfile profile_;
  gateway::Gateway& gateway_;
  std::vector<std::pair<bool, std::string>> transcript_;  // (is_agent, text)
};

std::string render_simulator_prompt(const SimulatorProfile& profile);

}  // namespace probekit::usersim
