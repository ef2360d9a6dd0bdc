#include "probekit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <unordered_map>

#include "probekit/errors.hpp"
#include "probekit/gateway.hpp"
#include "probekit/prompts.hpp"
#include "probekit/random.hpp"
#include "probekit/text.hpp"

namespace probekit::eval {

std::string_view to_string(TsVerdict v) {
  switch (v) {
    case TsVerdict::True: return "True";
    case TsVerdict::False: return "False";
    case TsVerdict::Reject: return "Reject";
  }
  return "False";
}

TsVerdict ts_from_string(std::string_view s) {
  if (s == "True") return TsVerdict::True;
  if (s == "False") return TsVerdict::False;
  if (s == "Reject") return TsVerdict::Reject;
  throw JudgeError("TS must be True, False or Reject, got '" + std::string(s) + "'",
                   std::string(s));
}

Json to_json(const JudgeVerdict& v) {
  Json j{{"qr", v.qr}, {"ts", to_string(v.ts)}};
  j["pc"] = v.pc ? Json(*v.pc) : Json(nullptr);
  return j;
}

JudgeVerdict verdict_from_json(const Json& j) {
  JudgeVerdict v;
  v.qr = j.at("qr").get<bool>();
  v.ts = ts_from_string(j.at("ts").get<std::string>());
  if (auto it = j.find("pc"); it != j.end() && !it->is_null()) v.pc = it->get<int>();
  if (v.pc && (*v.pc < 1 || *v.pc > 5)) throw ValidationError("pc must lie in 1..5");
  return v;
}

std::vector<TurnContext> turn_contexts(const DialogueSession& session) {
  std::vector<TurnContext> out;
  for (std::size_t k = 0; k < session.turns.size(); ++k) {
    const auto& t = session.turns[k];
    TurnContext c{session.target, t.user, t.decision, t.agent, std::nullopt};
    if (k + 1 < session.turns.size()) {
      c.reply = session.turns[k + 1].user;
    } else if (session.closing_reply) {
      c.reply = session.closing_reply;
    }
    out.push_back(std::move(c));
  }
  return out;
}

JudgeVerdict judge_rule_based(const TurnContext& turn) {
  if (!turn.user.annotations || (turn.reply && !turn.reply->annotations)) {
    throw PreconditionError(
        "rule-based judge needs simulator annotations; use the LLM judge for this transcript");
  }
  JudgeVerdict v;
  v.qr = !text::trim(turn.agent.text).empty() && turn.user.annotations->contains_question;
  if (turn.reply) {
    const auto& a = *turn.reply->annotations;
    if (a.is_refusal || text::trim(turn.reply->text).starts_with(prompts::kRefusalSentence)) {
      v.ts = TsVerdict::Reject;
    } else if (a.reveals_target) {
      v.ts = TsVerdict::True;
    }
  }
  return v;
}

std::string render_qrts_prompt(const TurnContext& turn) {
  std::string p(prompts::asset("qr_ts_judge"));
  p += "\n\nAssistant's target: " + turn.target.question;
  p += "\nUser's question: " + turn.user.text;
  p += "\nAssistant's reply: " + turn.agent.text;
  p += "\nUser's reply: " + (turn.reply ? turn.reply->text : std::string("(none)"));
  return p;
}

std::string render_pc_prompt(const DialogueSession& session) {
  std::string p(prompts::asset("pc_judge"));
  p += "\n\nDialogue history:";
  for (const auto& u : session.flatten()) {
    p += u.speaker == Speaker::User ? "\nuser: " : "\nassistant: ";
    p += u.text;
  }
  return p;
}

JudgeVerdict parse_qrts(std::string_view raw) {
  std::optional<bool> qr;
  std::optional<TsVerdict> ts;
  for (const auto& line : text::split_lines(raw)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    if (t.starts_with("QR:")) {
      const auto v = text::trim(t.substr(3));
      if (v == "True") {
        qr = true;
      } else if (v == "False") {
        qr = false;
      } else {
        throw JudgeError("QR must be True or False, got '" + v + "'", std::string(raw));
      }
    } else if (t.starts_with("TS:")) {
      try {
        ts = ts_from_string(text::trim(t.substr(3)));
      } catch (const JudgeError& e) {
        throw JudgeError(e.what(), std::string(raw));
      }
    } else {
      throw JudgeError("unexpected judge output line '" + t + "'", std::string(raw));
    }
  }
  if (!qr || !ts) throw JudgeError("judge output needs both QR and TS lines", std::string(raw));
  return JudgeVerdict{*qr, *ts, std::nullopt};
}

int parse_pc(std::string_view raw) {
  const auto t = text::trim(raw);
  if (!t.starts_with("PC:")) throw JudgeError("judge output must start with 'PC:'", t);
  auto v = text::trim(t.substr(3));
  if (v.size() == 3 && v.front() == '[' && v.back() == ']') v = v.substr(1, 1);
  if (v.size() != 1 || v[0] < '1' || v[0] > '5') {
    throw JudgeError("PC must be an integer from 1 to 5, got '" + v + "'", t);
  }
  return v[0] - '0';
}

namespace {

template <typename Parse>
auto ask_judge(gateway::Gateway& gateway, const std::string& prompt, std::uint64_t seed,
               Parse parse) {
  gateway::ChatRequest req;
  req.seed = seed;
  req.messages.push_back({gateway::Role::User, prompt});
  try {
    return parse(gateway.complete(req));
  } catch (const JudgeError&) {
    req.seed = mix_seed(seed, 1);
    return parse(gateway.complete(req));
  }
}

bool has_transition(const std::string& agent_text) {
  static const std::vector<std::string> cues{"since you", "because", "so that", "to tailor",
                                             "help me", "given that", "speaking of"};
  const auto lower = text::to_lower(agent_text);
  return std::any_of(cues.begin(), cues.end(),
                     [&](const std::string& c) { return text::contains(lower, c); });
}

}  // namespace

JudgeVerdict judge_llm_turn(gateway::Gateway& gateway, const TurnContext& turn,
                            std::uint64_t seed) {
  return ask_judge(gateway, render_qrts_prompt(turn), seed, parse_qrts);
}

int judge_llm_pc(gateway::Gateway& gateway, const DialogueSession& session, std::uint64_t seed) {
  return ask_judge(gateway, render_pc_prompt(session), seed, parse_pc);
}

void install_mock_judge(gateway::MockBackend& backend,
                        const std::vector<DialogueSession>& sessions) {
  auto table = std::make_shared<std::unordered_map<std::string, std::string>>();
  for (const auto& s : sessions) {
    for (const auto& c : turn_contexts(s)) {
      const auto v = judge_rule_based(c);
      (*table)[render_qrts_prompt(c)] =
          std::string("QR: ") + (v.qr ? "True" : "False") + "\nTS: " + std::string(to_string(v.ts));
    }
  }
  backend.prepend_rule(
      "judge-qrts-scripted",
      [table](const gateway::ChatRequest& r) { return table->contains(r.last_user_content()); },
      [table](const gateway::ChatRequest& r) { return table->at(r.last_user_content()); });
}

void install_mock_judge_defaults(gateway::MockBackend& backend) {
  backend.add_rule("judge-qrts", "Task 1: Answer existence judgment (QR)",
                   [](const gateway::ChatRequest& r) {
                     const auto& p = r.last_user_content();
                     auto field = [&](std::string_view label) {
                       auto b = p.find(label);
                       if (b == std::string::npos) return std::string();
                       b += label.size();
                       return p.substr(b, p.find('\n', b) - b);
                     };
                     const auto reply = text::trim(field("\nUser's reply: "));
                     const bool qr = !text::trim(field("\nAssistant's reply: ")).empty() &&
                                     text::contains(field("\nUser's question: "), "?");
                     const char* ts =
                         reply.starts_with(prompts::kRefusalSentence) ? "Reject" : "False";
                     return std::string("QR: ") + (qr ? "True" : "False") + "\nTS: " + ts;
                   });
  backend.add_rule("judge-pc", "Task: Probing Coherence (PC) scoring judgment",
                   [](const gateway::ChatRequest& r) {
                     int probes = 0, smooth = 0;
                     for (const auto& line : text::split_lines(r.last_user_content())) {
                       if (!line.starts_with("assistant: ") || !text::contains(line, "?")) continue;
                       ++probes;
                       if (has_transition(line)) ++smooth;
                     }
                     int pc = 3;
                     if (probes > 0) pc = smooth == probes ? 5 : (smooth > 0 ? 4 : 2);
                     return "PC: " + std::to_string(pc);
                   });
}

// ---------------------------------------------------------------------------
// Metrics

Json to_json(const SessionMetrics& m) {
  Json j{{"success", m.success},
         {"turns", m.turns},
         {"probes", m.probes},
         {"rejected_probes", m.rejected_probes},
         {"queries", m.queries},
         {"answered_queries", m.answered_queries}};
  j["pc"] = m.pc ? Json(*m.pc) : Json(nullptr);
  return j;
}

SessionMetrics metrics_from_json(const Json& j) {
  SessionMetrics m;
  m.success = j.at("success").get<bool>();
  m.turns = j.at("turns").get<int>();
  m.probes = j.at("probes").get<int>();
  m.rejected_probes = j.at("rejected_probes").get<int>();
  m.queries = j.at("queries").get<int>();
  m.answered_queries = j.at("answered_queries").get<int>();
  if (auto it = j.find("pc"); it != j.end() && !it->is_null()) m.pc = it->get<double>();
  return m;
}

SessionMetrics session_metrics(const DialogueSession& session,
                               const std::vector<JudgeVerdict>& verdicts,
                               std::optional<double> pc) {
  if (verdicts.size() != session.turns.size()) {
    throw ValidationError("session '" + session.id + "' has " +
                          std::to_string(session.turns.size()) + " turns but " +
                          std::to_string(verdicts.size()) + " verdicts");
  }
  SessionMetrics m;
  m.turns = static_cast<int>(session.turns.size());
  m.pc = pc;
  for (std::size_t k = 0; k < verdicts.size(); ++k) {
    const auto& t = session.turns[k];
    const auto& v = verdicts[k];
    if (t.decision == Decision::Probe) {
      ++m.probes;
      if (v.ts == TsVerdict::Reject) ++m.rejected_probes;
      if (v.ts == TsVerdict::True) m.success = true;
    }
    if (effective_annotations(t.user).contains_question) {
      ++m.queries;
      if (v.qr) ++m.answered_queries;
    }
  }
  return m;
}

SessionMetrics human_session_metrics(const DialogueSession& session,
                                     const std::vector<std::optional<bool>>& probe_flags,
                                     std::optional<double> pc) {
  if (probe_flags.size() > session.turns.size()) {
    throw ValidationError("more probe flags than turns in session '" + session.id + "'");
  }
  SessionMetrics m;
  m.turns = static_cast<int>(session.turns.size());
  m.pc = pc;
  for (std::size_t k = 0; k < session.turns.size(); ++k) {
    const auto& t = session.turns[k];
    if (t.decision == Decision::Probe) {
      ++m.probes;
      const auto flag = k < probe_flags.size() ? probe_flags[k] : std::nullopt;
      if (flag && !*flag) ++m.rejected_probes;
      if (flag && *flag) m.success = true;
    }
    if (text::contains(t.user.text, "?")) {
      ++m.queries;
      if (!text::trim(t.agent.text).empty()) ++m.answered_queries;
    }
  }
  return m;
}

Json to_json(const AggregateMetrics& a) {
  Json j{{"sessions", a.sessions},
         {"successes", a.successes},
         {"total_turns", a.total_turns},
         {"probes", a.probes},
         {"rejected_probes", a.rejected_probes},
         {"queries", a.queries},
         {"answered_queries", a.answered_queries},
         {"tsr", a.tsr},
         {"avg_t", a.avg_t},
         {"rpr", a.rpr},
         {"rpr_undefined", a.rpr_undefined},
         {"qrr", a.qrr}};
  j["pc_mean"] = a.pc_mean ? Json(*a.pc_mean) : Json(nullptr);
  j["ous"] = a.ous ? Json(*a.ous) : Json(nullptr);
  return j;
}

double ous(double pc, double rpr) { return (pc + 5.0 * (1.0 - rpr)) / 2.0; }

AggregateMetrics aggregate(const std::vector<SessionMetrics>& sessions) {
  if (sessions.empty()) throw ValidationError("aggregate needs at least one session");
  AggregateMetrics a;
  double pc_sum = 0.0;
  int pc_count = 0;
  for (const auto& m : sessions) {
    if (m.rejected_probes > m.probes || m.answered_queries > m.queries) {
      throw ValidationError("session metrics have a numerator above its denominator");
    }
    ++a.sessions;
    a.successes += m.success ? 1 : 0;
    a.total_turns += m.turns;
    a.probes += m.probes;
    a.rejected_probes += m.rejected_probes;
    a.queries += m.queries;
    a.answered_queries += m.answered_queries;
    if (m.pc) {
      pc_sum += *m.pc;
      ++pc_count;
    }
  }
  a.tsr = static_cast<double>(a.successes) / a.sessions;
  a.avg_t = static_cast<double>(a.total_turns) / a.sessions;
  a.rpr_undefined = a.probes == 0;
  a.rpr = a.probes == 0 ? 0.0 : static_cast<double>(a.rejected_probes) / a.probes;
  a.qrr = a.queries == 0 ? 0.0 : static_cast<double>(a.answered_queries) / a.queries;
  if (pc_count > 0) {
    a.pc_mean = pc_sum / pc_count;
    a.ous = ous(*a.pc_mean, a.rpr);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Agreement

double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ValidationError("kappa raters rated different item counts");
  if (a.size() < 2) throw ValidationError("kappa needs at least two items");
  std::map<int, std::pair<double, double>> marginals;
  double agree = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    marginals[a[i]].first += 1.0;
    marginals[b[i]].second += 1.0;
    if (a[i] == b[i]) agree += 1.0;
  }
  const double n = static_cast<double>(a.size());
  const double po = agree / n;
  double pe = 0.0;
  for (const auto& [cat, m] : marginals) pe += (m.first / n) * (m.second / n);
  if (pe >= 1.0) throw NumericError("kappa is undefined when both raters use a single category");
  return (po - pe) / (1.0 - pe);
}

double kripp_alpha(const std::vector<std::vector<std::optional<double>>>& ratings,
                   AlphaLevel level) {
  if (ratings.size() < 2) throw ValidationError("alpha needs at least two coders");
  const auto units = ratings.front().size();
  for (const auto& row : ratings) {
    if (row.size() != units) throw ValidationError("alpha coders rated different unit counts");
  }
  // Coincidence matrix over the distinct values.
  std::vector<double> values;
  for (const auto& row : ratings) {
    for (const auto& v : row) {
      if (v) values.push_back(*v);
    }
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const auto V = values.size();
  auto idx = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), v) -
                                    values.begin());
  };
  std::vector<double> o(V * V, 0.0);
  for (std::size_t u = 0; u < units; ++u) {
    std::vector<std::size_t> present;
    for (const auto& row : ratings) {
      if (row[u]) present.push_back(idx(*row[u]));
    }
    const auto m = present.size();
    if (m < 2) continue;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t k = 0; k < m; ++k) {
        if (i != k) o[present[i] * V + present[k]] += 1.0 / static_cast<double>(m - 1);
      }
    }
  }
  std::vector<double> nc(V, 0.0);
  double n = 0.0;
  for (std::size_t c = 0; c < V; ++c) {
    for (std::size_t k = 0; k < V; ++k) nc[c] += o[c * V + k];
    n += nc[c];
  }
  if (n < 2.0) throw NumericError("alpha needs at least one unit with two ratings");

  auto delta2 = [&](std::size_t c, std::size_t k) -> double {
    switch (level) {
      case AlphaLevel::Nominal: return c == k ? 0.0 : 1.0;
      case AlphaLevel::Interval: return (values[c] - values[k]) * (values[c] - values[k]);
      case AlphaLevel::Ordinal: {
        const auto lo = std::min(c, k), hi = std::max(c, k);
        double s = 0.0;
        for (auto g = lo; g <= hi; ++g) s += nc[g];
        s -= (nc[c] + nc[k]) / 2.0;
        return s * s;
      }
    }
    return 0.0;
  };
  double d_o = 0.0, d_e = 0.0;
  for (std::size_t c = 0; c < V; ++c) {
    for (std::size_t k = 0; k < V; ++k) {
      const double d = delta2(c, k);
      d_o += o[c * V + k] * d;
      d_e += nc[c] * nc[k] * d;
    }
  }
  d_o /= n;
  d_e /= n * (n - 1.0);
  if (d_e == 0.0) throw NumericError("alpha is undefined when every rating has the same value");
  return 1.0 - d_o / d_e;
}

// ---------------------------------------------------------------------------
// Report

std::string format_fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

std::string format_percent(double ratio) { return format_fixed2(ratio * 100.0) + "%"; }

namespace {

std::vector<std::string> row_cells(const ReportRow& r) {
  const auto& m = r.metrics;
  return {r.label,
          format_percent(m.tsr),
          format_fixed2(m.avg_t),
          m.rpr_undefined ? "n/a" : format_percent(m.rpr),
          format_percent(m.qrr),
          m.pc_mean ? format_fixed2(*m.pc_mean) : "n/a",
          m.ous ? format_fixed2(*m.ous) : "n/a"};
}

const std::vector<std::string>& header() {
  static const std::vector<std::string> h{"Method", "TSR", "AvgT", "RPR", "QRR", "PC", "OUS"};
  return h;
}

}  // namespace

std::string render_table(const std::vector<ReportRow>& rows) {
  std::vector<std::vector<std::string>> cells{header()};
  for (const auto& r : rows) cells.push_back(row_cells(r));
  std::vector<std::size_t> width(header().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      if (i == 0) {
        os << std::left << std::setw(static_cast<int>(width[i])) << cells[r][i];
      } else {
        os << "  " << std::right << std::setw(static_cast<int>(width[i])) << cells[r][i];
      }
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

std::string render_csv(const std::vector<ReportRow>& rows) {
  std::string out = "method,tsr,avg_t,rpr,qrr,pc,ous,sessions,probes\n";
  for (const auto& r : rows) {
    const auto c = row_cells(r);
    for (std::size_t i = 0; i < c.size(); ++i) {
      out += (i ? "," : "") + c[i];
    }
    out += "," + std::to_string(r.metrics.sessions) + "," + std::to_string(r.metrics.probes) + "\n";
  }
  return out;
}

Json report_json(const std::vector<ReportRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    const auto c = row_cells(r);
    out.push_back(Json{{"method", r.label},
                       {"metrics", to_json(r.metrics)},
                       {"formatted",
                        {{"tsr", c[1]}, {"avg_t", c[2]}, {"rpr", c[3]}, {"qrr", c[4]},
                         {"pc", c[5]}, {"ous", c[6]}}}});
  }
  return out;
}

}  // namespace probekit::eval
