#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "probekit/dialogue.hpp"
#include "probekit/gateway.hpp"
#include "probekit/policy.hpp"

namespace probekit::agents {

enum class AgentKind { Vanilla, Proactive, IclAif, ProChatIp };

inline constexpr AgentKind kAllAgents[] = {AgentKind::Vanilla, AgentKind::Proactive,
                                           AgentKind::IclAif, AgentKind::ProChatIp};

std::string_view to_string(AgentKind k);
AgentKind agent_kind_from_string(std::string_view s);

// ICL-AIF runs two calls per turn; every other agent uses Respond only.
enum class Stage { Suggest, Respond };

struct AgentTurnOutput {
  std::optional<Decision> strategy;  // absent for Vanilla
  std::string response_text;
  std::optional<std::vector<std::string>> suggestions;  // ICL-AIF only
  std::string raw;
};

// Earlier utterances as "user: ..." / "assistant: ..." lines, excluding u_t.
std::string render_history(const DialogueHistory& history);

// History block followed by the instantiated template. `decision` is required
// for ProChatIp and ignored otherwise; `suggestions` feeds the ICL-AIF
// Respond stage. Throws ContractError on a missing decision or suggestions.
std::string render_prompt(AgentKind kind, Stage stage, const DialogueHistory& history,
                          const TargetInfo& target, std::optional<Decision> decision = std::nullopt,
                          const std::vector<std::string>* suggestions = nullptr);

// The chatbot system prompt plus render_prompt() as the user message.
gateway::ChatRequest build_request(AgentKind kind, Stage stage, const DialogueHistory& history,
                                   const TargetInfo& target, std::optional<Decision> decision,
                                   const std::vector<std::string>* suggestions,
                                   std::uint64_t seed);

// Parses Proactive ("Strategy:/Response:") or ICL-AIF ("Suggestions:/Response:")
// output. Throws ParseError carrying the raw text on a missing section or a
// suggestion count other than three.
AgentTurnOutput parse_strategy(std::string_view raw, AgentKind kind);

// Text after an optional leading "Response:".
std::string parse_response(std::string_view raw);

// One agent turn. Proactive/ICL-AIF/ProChatIp get one retry on a contract or
// parse violation before a ParseError. ICL-AIF reports Probe when its reply
// asks something; Vanilla never probes.
AgentTurnOutput respond(AgentKind kind, gateway::Gateway& gateway, const DialogueHistory& history,
                        const TargetInfo& target, std::optional<Decision> decision,
                        std::uint64_t seed);

// Deterministic scripted replies for every agent template. Proactive asks from
// turn 2 on; ICL-AIF asks on odd turns from 3 on; ProChatIp follows the
// decision it was given.
void install_mock_scripts(gateway::MockBackend& backend);

// Conversation-strategy decisions from a gateway LLM prompted with the
// governing rules. prob_probe is 1 or 0.
class RemoteStrategy {
 public:
  explicit RemoteStrategy(gateway::Gateway& gateway) : gateway_(gateway) {}
  policy::DecisionResult decide(const DialogueHistory& history, const TargetInfo& target,
                                std::uint64_t seed);
  std::string render(const DialogueHistory& history, const TargetInfo& target) const;

 private:
  gateway::Gateway& gateway_;
};

// Mock for RemoteStrategy: Answer on refusals and on the first two turns, Ask
// otherwise.
void install_mock_strategy_script(gateway::MockBackend& backend);

}  // namespace probekit::agents
