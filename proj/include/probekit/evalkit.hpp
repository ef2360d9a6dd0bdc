#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "probekit/dialogue.hpp"

namespace probekit::gateway {
class Gateway;
class MockBackend;
}  // namespace probekit::gateway

namespace probekit::eval {

enum class TsVerdict { True, False, Reject };

std::string_view to_string(TsVerdict v);
TsVerdict ts_from_string(std::string_view s);

struct JudgeVerdict {
  bool qr = false;
  TsVerdict ts = TsVerdict::False;
  std::optional<int> pc;

  bool operator==(const JudgeVerdict&) const = default;
};

Json to_json(const JudgeVerdict& v);
JudgeVerdict verdict_from_json(const Json& j);

// One agent turn: u_t, d_t, r_t and the user's answer u_{t+1} when present.
struct TurnContext {
  TargetInfo target;
  Utterance user;
  Decision decision = Decision::Wait;
  Utterance agent;
  std::optional<Utterance> reply;
};

// Contexts for every completed turn of a session, in order.
std::vector<TurnContext> turn_contexts(const DialogueSession& session);

// Annotation-driven verdict. Throws PreconditionError when u_t or u_{t+1}
// carries no annotations; use the LLM judge for those transcripts.
JudgeVerdict judge_rule_based(const TurnContext& turn);

std::string render_qrts_prompt(const TurnContext& turn);
std::string render_pc_prompt(const DialogueSession& session);

// Strict parsers for the judge output formats. Throw JudgeError.
JudgeVerdict parse_qrts(std::string_view raw);
int parse_pc(std::string_view raw);

// Gateway judges; one retry on a format violation, then JudgeError.
JudgeVerdict judge_llm_turn(gateway::Gateway& gateway, const TurnContext& turn,
                            std::uint64_t seed = 0);
int judge_llm_pc(gateway::Gateway& gateway, const DialogueSession& session,
                 std::uint64_t seed = 0);

// QR/TS replies for exactly the given transcripts, taken from the rule-based
// judge. Other prompts fall through to later rules.
void install_mock_judge(gateway::MockBackend& backend, const std::vector<DialogueSession>& sessions);

// Text-only QR/TS heuristic (refusal prefix -> Reject, never True) and a
// transition-phrase heuristic for PC. Register after install_mock_judge().
void install_mock_judge_defaults(gateway::MockBackend& backend);

struct SessionMetrics {
  bool success = false;
  int turns = 0;
  int probes = 0;
  int rejected_probes = 0;
  int queries = 0;
  int answered_queries = 0;
  std::optional<double> pc;

  bool operator==(const SessionMetrics&) const = default;
};

Json to_json(const SessionMetrics& m);
SessionMetrics metrics_from_json(const Json& j);

// Requires one verdict per completed turn (ValidationError otherwise).
SessionMetrics session_metrics(const DialogueSession& session,
                               const std::vector<JudgeVerdict>& verdicts,
                               std::optional<double> pc = std::nullopt);

// Human-mode metrics: probe_flags[t] is true for an accepted probe, false for
// a rejected one, and absent on non-probe turns. Success means an accepted
// probe. Queries come from the question marks in the user's turns.
SessionMetrics human_session_metrics(const DialogueSession& session,
                                     const std::vector<std::optional<bool>>& probe_flags,
                                     std::optional<double> pc = std::nullopt);

struct AggregateMetrics {
  int sessions = 0;
  int successes = 0;
  int total_turns = 0;
  int probes = 0;
  int rejected_probes = 0;
  int queries = 0;
  int answered_queries = 0;
  double tsr = 0.0;
  double avg_t = 0.0;
  double rpr = 0.0;
  bool rpr_undefined = false;  // no probes at all; rpr reported as 0
  double qrr = 0.0;
  std::optional<double> pc_mean;
  std::optional<double> ous;
};

Json to_json(const AggregateMetrics& a);

// OUS = (PC + 5 (1 - RPR)) / 2.
double ous(double pc, double rpr);

// Pooled ratios over summed counts. Throws ValidationError on empty input.
AggregateMetrics aggregate(const std::vector<SessionMetrics>& sessions);

// Cohen's kappa for two raters over the same items.
double cohen_kappa(const std::vector<int>& rater_a, const std::vector<int>& rater_b);

enum class AlphaLevel { Nominal, Ordinal, Interval };

// ratings[c][u]: coder c's value for unit u, nullopt when missing. Units with
// fewer than two values are skipped. Throws NumericError when there is no
// disagreement to expect (a single value overall).
double kripp_alpha(const std::vector<std::vector<std::optional<double>>>& ratings,
                   AlphaLevel level);

struct ReportRow {
  std::string label;
  AggregateMetrics metrics;
};

// Columns TSR AvgT RPR QRR PC OUS; percents and decimals to two places.
std::string render_table(const std::vector<ReportRow>& rows);
std::string render_csv(const std::vector<ReportRow>& rows);
Json report_json(const std::vector<ReportRow>& rows);

std::string format_percent(double ratio);
std::string format_fixed2(double v);

}  // namespace probekit::eval
