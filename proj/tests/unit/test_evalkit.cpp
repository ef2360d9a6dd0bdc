#include <doctest.h>

#include "helpers.hpp"
#include "probekit/errors.hpp"
#include "probekit/evalkit.hpp"
#include "probekit/gateway.hpp"
#include "probekit/prompts.hpp"
#include "probekit/text.hpp"

using namespace probekit;
using namespace probekit::eval;
using testing::ann;

namespace {

TurnContext ctx(Decision d, const std::string& agent, Utterance reply) {
  return {testing::sample_target(), Utterance::user("How are yields?", ann(true)), d,
          Utterance::agent(agent), std::move(reply)};
}

// Three probes: rejected, ignored, then accepted on the last turn.
DialogueSession three_probe_session() {
  auto s = open_session("m", testing::sample_target(), "q");
  const auto refuse = std::string(prompts::kRefusalSentence) + " Anyway, why?";
  s = append_turn(s, Utterance::user("How are yields?", ann(true)), Decision::Probe,
                  Utterance::agent("Up. Your salary?"), Utterance::user(refuse, ann(true, true)));
  s = append_turn(s, Utterance::user(refuse, ann(true, true)), Decision::Probe,
                  Utterance::agent("Rates. Your salary?"), Utterance::user("And bonds?", ann(true)));
  s = append_turn(s, Utterance::user("And bonds?", ann(true)), Decision::Wait,
                  Utterance::agent("Bonds fell."), Utterance::user("What next?", ann(true)));
  s = append_turn(s, Utterance::user("What next?", ann(true)), Decision::Probe,
                  Utterance::agent("Calm. Your salary?"),
                  Utterance::user("It was 82,000 dollars.", ann(false, false, true)));
  return s;
}

}  // namespace

TEST_CASE("rule-based judge") {
  auto v = judge_rule_based(ctx(Decision::Probe, "Up. Salary?",
                                Utterance::user(std::string(prompts::kRefusalSentence) + " Why?",
                                                ann(true, true))));
  CHECK(v.qr);
  CHECK(v.ts == TsVerdict::Reject);
  v = judge_rule_based(ctx(Decision::Probe, "Up. Salary?",
                           Utterance::user("It was 82,000 dollars.", ann(false, false, true))));
  CHECK(v.ts == TsVerdict::True);
  v = judge_rule_based(ctx(Decision::Wait, "", Utterance::user("ok", ann(false))));
  CHECK_FALSE(v.qr);
  CHECK_THROWS_AS(judge_rule_based(ctx(Decision::Wait, "a", Utterance::user("no tags"))),
                  PreconditionError);
}

TEST_CASE("judge output parsing") {
  const auto v = parse_qrts("QR: True\nTS: Reject");
  CHECK(v.qr);
  CHECK(v.ts == TsVerdict::Reject);
  CHECK(parse_qrts("QR: False\nTS: True").ts == TsVerdict::True);
  CHECK_THROWS_AS(parse_qrts("QR: maybe\nTS: True"), JudgeError);
  CHECK_THROWS_AS(parse_qrts("TS: True"), JudgeError);
  CHECK(parse_pc("PC: 4") == 4);
  CHECK(parse_pc("PC: [4]") == 4);
  CHECK_THROWS_AS(parse_pc("PC: six"), JudgeError);
  CHECK_THROWS_AS(parse_pc("PC: 6"), JudgeError);
}

TEST_CASE("LLM judges through the gateway") {
  auto mock = std::make_unique<gateway::MockBackend>(0);
  int calls = 0;
  mock->add_rule("qrts", "Task 1: Answer existence", [&calls](const gateway::ChatRequest&) {
    return ++calls == 1 ? std::string("nonsense") : std::string("QR: True\nTS: Reject");
  });
  mock->add_rule("pc", "Probing Coherence", [](const gateway::ChatRequest&) {
    return std::string("PC: 4");
  });
  gateway::Gateway gw(std::move(mock), 1);
  const auto c = ctx(Decision::Probe, "Up. Salary?", Utterance::user("No."));
  const auto prompt = render_qrts_prompt(c);
  CHECK(text::contains(prompt, "User's reply: No."));
  const auto v = judge_llm_turn(gw, c);
  CHECK(v.qr);
  CHECK(v.ts == TsVerdict::Reject);
  CHECK(calls == 2);
  CHECK(judge_llm_pc(gw, three_probe_session()) == 4);
  CHECK(text::contains(render_pc_prompt(three_probe_session()), "Dialogue history:"));
}

TEST_CASE("mock judge replays rule verdicts for known transcripts") {
  const auto s = three_probe_session();
  auto mock = std::make_unique<gateway::MockBackend>(0);
  install_mock_judge(*mock, {s});
  install_mock_judge_defaults(*mock);
  gateway::Gateway gw(std::move(mock), 1);
  for (const auto& c : turn_contexts(s)) CHECK(judge_llm_turn(gw, c) == judge_rule_based(c));
  const int pc = judge_llm_pc(gw, s);
  CHECK(pc >= 1);
  CHECK(pc <= 5);
}

TEST_CASE("session metrics") {
  const auto s = three_probe_session();
  std::vector<JudgeVerdict> verdicts;
  for (const auto& c : turn_contexts(s)) verdicts.push_back(judge_rule_based(c));
  const auto m = session_metrics(s, verdicts, 4.0);
  CHECK(m.probes == 3);
  CHECK(m.rejected_probes == 1);
  CHECK(m.success);
  CHECK(m.turns == 4);
  CHECK(m.queries == 4);
  CHECK(m.answered_queries == 4);
  CHECK(metrics_from_json(to_json(m)) == m);
  verdicts.pop_back();
  CHECK_THROWS_AS(session_metrics(s, verdicts), ValidationError);

  const auto human = human_session_metrics(s, {false, true, std::nullopt, true}, 3.0);
  CHECK(human.probes == 3);
  CHECK(human.rejected_probes == 1);
  CHECK(human.success);
}

TEST_CASE("aggregate metrics") {
  SessionMetrics win{true, 2, 1, 0, 2, 2, 5.0};
  SessionMetrics lose{false, 8, 0, 0, 4, 3, std::nullopt};
  SessionMetrics rejected{true, 4, 2, 1, 2, 2, 4.0};
  const auto a = aggregate({win, win, rejected, lose});
  CHECK(a.tsr == doctest::Approx(0.75));
  CHECK(a.avg_t == doctest::Approx(16.0 / 4.0));
  CHECK(a.rpr == doctest::Approx(1.0 / 4.0));
  CHECK(a.qrr == doctest::Approx(9.0 / 10.0));
  REQUIRE(a.pc_mean);
  CHECK(*a.pc_mean == doctest::Approx(14.0 / 3.0));
  REQUIRE(a.ous);
  CHECK(*a.ous == doctest::Approx((14.0 / 3.0 + 5.0 * 0.75) / 2.0));

  const auto none = aggregate({lose});
  CHECK(none.rpr_undefined);
  CHECK(none.rpr == 0.0);
  CHECK_FALSE(none.pc_mean);
}

TEST_CASE("OUS") {
  CHECK(ous(4.72, 0.1372) == doctest::Approx(4.517).epsilon(1e-12));
  CHECK(ous(4.43, 0.3545) == doctest::Approx(3.82875).epsilon(1e-12));
  CHECK(format_fixed2(ous(4.72, 0.1372)) == "4.52");
  CHECK(format_fixed2(ous(4.43, 0.3545)) == "3.83");
}

TEST_CASE("Cohen's kappa") {
  CHECK(cohen_kappa({0, 1, 1, 0}, {0, 1, 1, 0}) == doctest::Approx(1.0));
  std::vector<int> a, b;
  auto add = [&](int x, int y, int n) {
    for (int i = 0; i < n; ++i) {
      a.push_back(x);
      b.push_back(y);
    }
  };
  add(0, 0, 20);
  add(0, 1, 5);
  add(1, 0, 10);
  add(1, 1, 15);
  CHECK(std::abs(cohen_kappa(a, b) - 0.40) < 1e-9);
  CHECK_THROWS_AS(cohen_kappa({1, 1}, {1, 1}), NumericError);
  CHECK_THROWS(cohen_kappa({1}, {1, 2}));
}

TEST_CASE("Krippendorff's alpha") {
  using R = std::optional<double>;
  const R N = std::nullopt;
  // Values frozen from tests/oracles/agreement_oracle.py (pairable-value definition).
  std::vector<std::vector<R>> data{
      {1, 2, 3, 3, 2, 1, 4, 1, 2, N, N, N},
      {1, 2, 3, 3, 2, 2, 4, 1, 2, 5, N, 3},
      {N, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, N},
      {1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, N},
  };
  const double nominal = kripp_alpha(data, AlphaLevel::Nominal);
  CHECK(std::abs(nominal - 0.7434210526315791) < 1e-9);
  CHECK(std::abs(kripp_alpha(data, AlphaLevel::Ordinal) - 0.8153875037548814) < 1e-9);
  for (auto& row : data) row.push_back(N);
  CHECK(std::abs(kripp_alpha(data, AlphaLevel::Nominal) - nominal) < 1e-9);

  std::vector<std::vector<R>> perfect{{1, 2, 3}, {1, 2, 3}};
  CHECK(kripp_alpha(perfect, AlphaLevel::Interval) == doctest::Approx(1.0));
  std::vector<std::vector<R>> constant{{2, 2}, {2, 2}};
  CHECK_THROWS_AS(kripp_alpha(constant, AlphaLevel::Nominal), NumericError);
}

TEST_CASE("report formatting") {
  AggregateMetrics m;
  m.tsr = 0.0;
  m.avg_t = 8.0;
  m.rpr = 0.1372;
  m.qrr = 1.0;
  m.pc_mean = 4.72;
  m.ous = ous(4.72, 0.1372);
  const std::vector<ReportRow> rows{{"prochatip", m}};
  const auto table = render_table(rows);
  CHECK(text::contains(table, "0.00%"));
  CHECK(text::contains(table, "13.72%"));
  CHECK(text::contains(table, "4.52"));
  CHECK(text::contains(table, "8.00"));
  const auto csv = render_csv(rows);
  CHECK(csv.rfind("method,tsr", 0) == 0);
  CHECK(report_json(rows).at(0).at("method") == "prochatip");
  CHECK(format_percent(0.3545) == "35.45%");
}
