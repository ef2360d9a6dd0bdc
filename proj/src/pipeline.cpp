#include "probekit/pipeline.hpp"

#include <fstream>

#include "probekit/errors.hpp"
#include "probekit/random.hpp"
#include "probekit/text.hpp"

namespace probekit::pipeline {

namespace fs = std::filesystem;

namespace {

std::string_view to_string(JudgeMode m) {
  switch (m) {
    case JudgeMode::Auto: return "auto";
    case JudgeMode::Rule: return "rule";
    case JudgeMode::Llm: return "llm";
  }
  return "auto";
}

void require(const fs::path& path, std::string_view what, std::string_view producer) {
  if (!fs::exists(path)) {
    throw ConfigError(std::string(what) + " not found at " + path.string() + "; run `probekit " +
                      std::string(producer) + "` first");
  }
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

}  // namespace

void RunConfig::validate() const {
  if (!corpus_path.empty() && pairs_path.empty() && !fs::exists(corpus_path)) {
    throw ConfigError("corpus file " + corpus_path.string() + " does not exist");
  }
  if (!pairs_path.empty() && !fs::exists(pairs_path)) {
    throw ConfigError("pair file " + pairs_path.string() + " does not exist");
  }
  if (!policy_checkpoint.empty() && !fs::exists(policy_checkpoint)) {
    throw ConfigError("policy checkpoint " + policy_checkpoint.string() + " does not exist");
  }
  if (pairs < 1) throw ConfigError("pairs must be >= 1");
  reward.validate();
  train.validate();
  synth.validate();
}

Json RunConfig::to_json() const {
  return Json{{"backend", backend.to_json()},
              {"agent", agents::to_string(agent)},
              {"policy_checkpoint", policy_checkpoint.string()},
              {"remote_strategy", remote_strategy},
              {"reward", reward.to_json()},
              {"train", train.to_json()},
              {"sft",
               {{"batch_size", sft.batch_size},
                {"learning_rate", sft.learning_rate},
                {"epochs", sft.epochs},
                {"validation_fraction", sft.validation_fraction},
                {"seed", sft.seed}}},
              {"synth", synth.to_json()},
              {"corpus_path", corpus_path.string()},
              {"pairs_path", pairs_path.string()},
              {"pairs", pairs},
              {"eval_episodes", eval_episodes},
              {"output_dir", output_dir.string()},
              {"seed", seed},
              {"judge", to_string(judge)},
              {"simulator", simulator == SimulatorMode::Rule ? "rule" : "llm"},
              {"synth_llm", synth_llm}};
}

fs::path Paths::transcripts(agents::AgentKind k) const {
  return root / "transcripts" / (std::string(agents::to_string(k)) + ".jsonl");
}
fs::path Paths::verdicts(agents::AgentKind k) const {
  return root / "verdicts" / (std::string(agents::to_string(k)) + ".jsonl");
}
fs::path Paths::metrics(agents::AgentKind k) const {
  return root / "metrics" / (std::string(agents::to_string(k)) + ".json");
}

Paths paths_for(const RunConfig& config) { return Paths{config.output_dir}; }

void install_mock_scripts(gateway::MockBackend& backend, const RunConfig& config) {
  eval::install_mock_judge_defaults(backend);
  agents::install_mock_strategy_script(backend);
  synth::install_mock_script(backend, config.synth);
  agents::install_mock_scripts(backend);
}

std::unique_ptr<gateway::Gateway> make_gateway(const RunConfig& config) {
  std::unique_ptr<gateway::Backend> mock;
  if (config.backend.kind == gateway::BackendKind::Mock ||
      config.backend.kind == gateway::BackendKind::Record) {
    if (config.backend.kind == gateway::BackendKind::Mock || config.backend.base_url.empty()) {
      auto m = std::make_unique<gateway::MockBackend>(config.backend.mock_seed);
      install_mock_scripts(*m, config);
      mock = std::move(m);
    }
  }
  return gateway::make_gateway(config.backend, std::move(mock));
}

fs::path synth_data(const RunConfig& config, gateway::Gateway& gw, const Logger& log) {
  auto cfg = config.synth;
  cfg.seed = config.seed;
  const auto data = synth::generate_dataset(cfg, config.synth_llm ? &gw : nullptr);
  const auto out = paths_for(config).dataset();
  fs::create_directories(out.parent_path());
  synth::save_dataset(data, out);
  int probes = 0;
  for (const auto& e : data) probes += to_int(e.label);
  say(log, "wrote " + std::to_string(data.size()) + " labeled examples (" +
               std::to_string(probes) + " Probe) to " + out.string());
  return out;
}

fs::path sft(const RunConfig& config, const Logger& log) {
  const auto p = paths_for(config);
  require(p.dataset(), "SFT dataset", "synth-data");
  const auto data = synth::load_dataset(p.dataset());
  auto cfg = config.sft;
  cfg.seed = config.seed;
  const auto [params, sft_log] = policy::sft_train(std::span<const policy::LabeledExample>(data), cfg);
  policy::save_checkpoint(params, p.sft_policy());
  write_text(p.sft_log(), sft_log.to_json().dump(2) + "\n");
  const auto& best = sft_log.epochs.at(static_cast<std::size_t>(sft_log.best_epoch - 1));
  say(log, "sft: initial loss " + eval::format_fixed2(sft_log.initial_loss) + ", best epoch " +
               std::to_string(sft_log.best_epoch) + " val accuracy " +
               eval::format_percent(best.val_accuracy) + "; checkpoint " + p.sft_policy().string());
  return p.sft_policy();
}

usersim::SimulatorProfile make_profile(const corpus::PairSpec& pair, std::size_t index,
                                       std::uint64_t seed,
                                       const std::vector<usersim::Combination>& combos) {
  Rng rng(mix_seed(seed, index));
  usersim::SimulatorProfile p;
  p.id = pair.id;
  p.query_script = usersim::reveal_script(pair.user_item.question, rng.index(2) == 1);
  p.target = corpus::to_target(pair.target_item);
  p.instructions = combos.at(rng.index(combos.size()));
  return p;
}

std::vector<corpus::PairSpec> load_or_make_pairs(const RunConfig& config, const Logger& log) {
  if (!config.pairs_path.empty()) return corpus::load_pairs(config.pairs_path);
  const auto items = corpus::load_corpus(config.corpus_path);
  const auto halves = corpus::partition(items, config.seed);
  const auto n = std::min(config.pairs, halves.a.size() * halves.b.size());
  auto pairs = corpus::make_pairs(halves, n, config.seed);
  const auto out = paths_for(config).pairs();
  fs::create_directories(out.parent_path());
  corpus::save_pairs(pairs, out);
  say(log, "built " + std::to_string(pairs.size()) + " pairs from " + config.corpus_path.string() +
               " into " + out.string());
  return pairs;
}

namespace {

usersim::CombinationSplit combination_split(const RunConfig& config) {
  return usersim::split_train_test(usersim::enumerate_combinations(1, 7), config.seed);
}

}  // namespace

fs::path rl_train(const RunConfig& config, gateway::Gateway& gw, const Logger& log) {
  const auto p = paths_for(config);
  require(p.sft_policy(), "SFT checkpoint", "sft");
  const auto initial = policy::load_checkpoint(p.sft_policy());
  const auto pairs = load_or_make_pairs(config, log);
  const auto split = combination_split(config);
  std::vector<usersim::SimulatorProfile> profiles;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    profiles.push_back(make_profile(pairs[i], i, config.seed, split.train));
  }
  rl::ProfileEnvironment env(profiles, split.train, split.test, config.eval_episodes,
                             config.train.max_turns);
  auto tc = config.train;
  tc.seed = config.seed;
  tc.reward.gamma = tc.gamma;
  fs::create_directories(p.checkpoints());
  auto [params, train_log] = rl::train(initial, tc, env, gw, [&](int ep, const policy::PolicyParams& w) {
    policy::save_checkpoint(w, p.checkpoints() / ("rl_ep" + std::to_string(ep) + ".json"));
  });
  policy::save_checkpoint(params, p.rl_policy());
  train_log.save(p.train_log());
  double first = 0.0;
  for (const auto& r : train_log.records) first += r["total_reward"].get<double>();
  say(log, "rl-train: " + std::to_string(train_log.records.size()) + " episodes, mean reward " +
               eval::format_fixed2(first / static_cast<double>(train_log.records.size())) +
               "; checkpoint " + p.rl_policy().string());
  return p.rl_policy();
}

policy::PolicyParams resolve_policy(const RunConfig& config) {
  if (!config.policy_checkpoint.empty()) return policy::load_checkpoint(config.policy_checkpoint);
  const auto p = paths_for(config);
  if (fs::exists(p.rl_policy())) return policy::load_checkpoint(p.rl_policy());
  if (fs::exists(p.sft_policy())) return policy::load_checkpoint(p.sft_policy());
  throw ConfigError("no policy checkpoint in " + p.root.string() +
                    "; run `probekit rl-train` (or `probekit sft`) first, or pass --policy");
}

void save_transcripts(const std::vector<DialogueSession>& sessions, const fs::path& path) {
  std::string body;
  for (const auto& s : sessions) body += encode_session(s) + "\n";
  write_text(path, body);
}

std::vector<DialogueSession> load_transcripts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open transcripts " + path.string());
  std::vector<DialogueSession> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(decode_session(line));
  }
  return out;
}

std::vector<DialogueSession> simulate(const RunConfig& config, agents::AgentKind agent,
                                      gateway::Gateway& gw, const Logger& log) {
  const auto pairs = load_or_make_pairs(config, log);
  const auto split = combination_split(config);
  std::optional<policy::PolicyParams> params;
  std::optional<agents::RemoteStrategy> remote;
  if (agent == agents::AgentKind::ProChatIp) {
    if (config.remote_strategy) {
      remote.emplace(gw);
    } else {
      params = resolve_policy(config);
    }
  }
  rl::RolloutConfig rc;
  rc.agent = agent;
  rc.max_turns = config.train.max_turns;
  rc.reward = config.reward;
  rc.sample = false;
  if (config.simulator == SimulatorMode::Llm) {
    rc.judge = [&gw](const TargetInfo& target, const Utterance& user, Decision d,
                     const Utterance& agent_utt, const Utterance& reply) {
      const auto v = eval::judge_llm_turn(gw, eval::TurnContext{target, user, d, agent_utt, reply});
      Annotations a;
      a.contains_question = text::contains(reply.text, "?");
      a.is_refusal = v.ts == eval::TsVerdict::Reject;
      a.reveals_target = v.ts == eval::TsVerdict::True;
      return a;
    };
  }
  std::vector<DialogueSession> sessions;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto profile = make_profile(pairs[i], i, config.seed, split.test);
    std::unique_ptr<usersim::UserSimulator> sim;
    if (config.simulator == SimulatorMode::Llm) {
      sim = std::make_unique<usersim::LlmSimulator>(profile, gw);
    } else {
      sim = std::make_unique<usersim::RuleSimulator>(profile);
    }
    const auto seed = mix_seed(config.seed, 0x5e55 + i);
    auto res = rl::run_session(rl::StrategySource{params ? &*params : nullptr,
                                                  remote ? &*remote : nullptr},
                               *sim, gw, rc, seed, pairs[i].id);
    sessions.push_back(std::move(res.session));
  }
  const auto out = paths_for(config).transcripts(agent);
  save_transcripts(sessions, out);
  say(log, "simulated " + std::to_string(sessions.size()) + " sessions with " +
               std::string(agents::to_string(agent)) + " into " + out.string());
  return sessions;
}

Evaluation evaluate_sessions(const RunConfig& config, const std::vector<DialogueSession>& sessions,
                             gateway::Gateway& gw) {
  Evaluation ev;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto& s = sessions[i];
    std::vector<eval::JudgeVerdict> verdicts;
    for (const auto& c : eval::turn_contexts(s)) {
      const bool annotated = c.user.annotations && (!c.reply || c.reply->annotations);
      const bool use_rule =
          config.judge == JudgeMode::Rule || (config.judge == JudgeMode::Auto && annotated);
      verdicts.push_back(use_rule ? eval::judge_rule_based(c)
                                  : eval::judge_llm_turn(gw, c, mix_seed(config.seed, i)));
    }
    std::optional<double> pc;
    if (config.judge != JudgeMode::Rule && !s.turns.empty()) {
      pc = eval::judge_llm_pc(gw, s, mix_seed(config.seed, i));
    }
    ev.sessions.push_back(eval::session_metrics(s, verdicts, pc));
    ev.verdicts.push_back(std::move(verdicts));
  }
  ev.aggregate = eval::aggregate(ev.sessions);
  return ev;
}

Evaluation evaluate(const RunConfig& config, agents::AgentKind agent, gateway::Gateway& gw,
                    const Logger& log) {
  const auto p = paths_for(config);
  require(p.transcripts(agent), "transcripts for " + std::string(agents::to_string(agent)),
          "simulate --agent " + std::string(agents::to_string(agent)));
  const auto sessions = load_transcripts(p.transcripts(agent));
  auto ev = evaluate_sessions(config, sessions, gw);

  std::string verdict_lines;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    Json turns = Json::array();
    for (const auto& v : ev.verdicts[i]) turns.push_back(eval::to_json(v));
    verdict_lines += Json{{"session", sessions[i].id}, {"verdicts", turns}}.dump() + "\n";
  }
  write_text(p.verdicts(agent), verdict_lines);
  Json per_session = Json::array();
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    per_session.push_back(Json{{"session", sessions[i].id}, {"metrics", eval::to_json(ev.sessions[i])}});
  }
  Json metrics{{"agent", agents::to_string(agent)},
               {"aggregate", eval::to_json(ev.aggregate)},
               {"sessions", per_session}};
  write_text(p.metrics(agent), metrics.dump(2) + "\n");
  say(log, "evaluated " + std::to_string(sessions.size()) + " " +
               std::string(agents::to_string(agent)) + " sessions: TSR " +
               eval::format_percent(ev.aggregate.tsr) + ", AvgT " +
               eval::format_fixed2(ev.aggregate.avg_t));
  return ev;
}

std::vector<eval::ReportRow> report(const RunConfig& config, gateway::Gateway& gw,
                                    const Logger& log) {
  const auto p = paths_for(config);
  std::vector<eval::ReportRow> rows;
  for (auto kind : agents::kAllAgents) {
    if (!fs::exists(p.metrics(kind))) {
      if (!fs::exists(p.transcripts(kind))) simulate(config, kind, gw, log);
      evaluate(config, kind, gw, log);
    }
    std::ifstream in(p.metrics(kind));
    const auto j = Json::parse(in);
    const auto& a = j.at("aggregate");
    eval::AggregateMetrics m;
    m.sessions = a.at("sessions").get<int>();
    m.successes = a.at("successes").get<int>();
    m.total_turns = a.at("total_turns").get<int>();
    m.probes = a.at("probes").get<int>();
    m.rejected_probes = a.at("rejected_probes").get<int>();
    m.queries = a.at("queries").get<int>();
    m.answered_queries = a.at("answered_queries").get<int>();
    m.tsr = a.at("tsr").get<double>();
    m.avg_t = a.at("avg_t").get<double>();
    m.rpr = a.at("rpr").get<double>();
    m.rpr_undefined = a.at("rpr_undefined").get<bool>();
    m.qrr = a.at("qrr").get<double>();
    if (!a.at("pc_mean").is_null()) m.pc_mean = a.at("pc_mean").get<double>();
    if (!a.at("ous").is_null()) m.ous = a.at("ous").get<double>();
    rows.push_back({std::string(agents::to_string(kind)), m});
  }
  write_text(p.report_json(), Json{{"rows", eval::report_json(rows)}}.dump(2) + "\n");
  write_text(p.report_txt(), eval::render_table(rows));
  write_text(p.report_csv(), eval::render_csv(rows));
  return rows;
}

}  // namespace probekit::pipeline
