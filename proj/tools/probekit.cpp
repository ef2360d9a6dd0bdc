// probekit: command-line front end for the offline pipeline and the session service.

#include <csignal>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "probekit/errors.hpp"
#include "probekit/pipeline.hpp"
#include "probekit/service.hpp"

namespace pk = probekit;
namespace pl = probekit::pipeline;

namespace {

pk::service::SessionService* g_service = nullptr;

void on_signal(int) {
  if (g_service != nullptr) g_service->stop();
}

void print_config(const pl::RunConfig& cfg, const std::string& command) {
  std::cout << "command: " << command << "\n"
            << "seed: " << cfg.seed << "\n"
            << "config: " << cfg.to_json().dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proactive privacy-probing dialogue agents: data, training, simulation, evaluation"};
  app.set_config("--config", "", "TOML config: global keys at top, one [table] per command");
  app.require_subcommand(1);

  pl::RunConfig cfg;
  std::string backend = "mock";
  long timeout_ms = 60000;
  long retry_base_ms = 500;
  std::string judge = "auto";
  std::string simulator = "rule";
  int max_turns = pk::kDefaultMaxTurns;

  app.add_option("--backend", backend, "LLM backend")
      ->check(CLI::IsMember({"mock", "live", "replay", "record"}))
      ->capture_default_str();
  app.add_option("--base-url", cfg.backend.base_url, "OpenAI-compatible endpoint (live/record)");
  app.add_option("--model", cfg.backend.model, "Chat model id")->capture_default_str();
  app.add_option("--embedding-model", cfg.backend.embedding_model, "Embedding model id")
      ->capture_default_str();
  app.add_option("--credential-env", cfg.backend.credential_env,
                 "Environment variable holding the API key")
      ->capture_default_str();
  app.add_option("--cassette", cfg.backend.cassette, "Cassette file (replay/record)");
  app.add_option("--concurrency", cfg.backend.concurrency, "Max in-flight LLM calls")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--timeout-ms", timeout_ms, "Per-request timeout")->capture_default_str();
  app.add_option("--max-retries", cfg.backend.max_retries, "Retries on 429/5xx/connection errors")
      ->capture_default_str();
  app.add_option("--retry-base-ms", retry_base_ms, "Backoff base delay")->capture_default_str();
  app.add_option("--mock-seed", cfg.backend.mock_seed, "Seed for the mock backend")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "Master seed")->capture_default_str();
  app.add_option("--out", cfg.output_dir, "Output directory")->capture_default_str();
  app.add_option("--corpus", cfg.corpus_path, "Corpus JSONL")->capture_default_str();
  app.add_option("--pairs-file", cfg.pairs_path, "Pair JSONL (built from the corpus when unset)");
  app.add_option("--pairs", cfg.pairs, "Pairs to build from the corpus")->capture_default_str();
  app.add_option("--max-turns", max_turns, "Session turn cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_option("--judge", judge, "Judge: rule when annotated (auto), rule, or llm")
      ->check(CLI::IsMember({"auto", "rule", "llm"}))
      ->capture_default_str();
  app.add_option("--simulator", simulator, "User simulator")
      ->check(CLI::IsMember({"rule", "llm"}))
      ->capture_default_str();

  auto* synth = app.add_subcommand("synth-data", "Generate the labeled strategy dataset");
  synth->add_option("--sessions", cfg.synth.sessions, "Examples to generate")->capture_default_str();
  synth->add_flag("--llm", cfg.synth_llm, "Generate dialogues through the LLM backend");

  auto* sft = app.add_subcommand("sft", "Supervised fine-tuning of the strategy policy");
  sft->add_option("--epochs", cfg.sft.epochs)->capture_default_str();
  sft->add_option("--lr", cfg.sft.learning_rate)->capture_default_str();
  sft->add_option("--batch-size", cfg.sft.batch_size)->capture_default_str();
  sft->add_option("--val-fraction", cfg.sft.validation_fraction)->capture_default_str();

  auto* rl = app.add_subcommand("rl-train", "REINFORCE fine-tuning against the user simulator");
  rl->add_option("--episodes", cfg.train.episodes)->capture_default_str();
  rl->add_option("--lr", cfg.train.learning_rate)->capture_default_str();
  rl->add_option("--gamma", cfg.train.gamma)->capture_default_str();
  rl->add_option("--eval-every", cfg.train.eval_every)->capture_default_str();
  rl->add_option("--eval-episodes", cfg.eval_episodes)->capture_default_str();
  rl->add_flag("--baseline", cfg.train.baseline, "Subtract the running mean return");
  rl->add_option("--divergence-limit", cfg.train.divergence_limit)->capture_default_str();
  rl->add_option("--reward-success", cfg.reward.success)->capture_default_str();
  rl->add_option("--reward-rejected", cfg.reward.rejected)->capture_default_str();
  rl->add_option("--reward-invalid", cfg.reward.invalid)->capture_default_str();
  rl->add_option("--reward-smart-stop", cfg.reward.smart_stop)->capture_default_str();
  rl->add_option("--reward-mitigation", cfg.reward.mitigation)->capture_default_str();
  rl->add_option("--reward-passive", cfg.reward.passive_penalty)->capture_default_str();

  std::string agent = "prochatip";
  auto add_agent_opts = [&](CLI::App* sub, bool with_agent) {
    if (with_agent) {
      sub->add_option("--agent", agent, "Agent kind")
          ->check(CLI::IsMember({"vanilla", "proactive", "icl-aif", "prochatip"}))
          ->capture_default_str();
    }
    sub->add_option("--policy", cfg.policy_checkpoint,
                    "Strategy checkpoint (default: rl_policy.json, then sft_policy.json in --out)");
    sub->add_flag("--remote-strategy", cfg.remote_strategy,
                  "Ask the LLM backend for the Probe/Wait decision");
  };
  auto* simulate = app.add_subcommand("simulate", "Run agent sessions against the user simulator");
  add_agent_opts(simulate, true);
  auto* evaluate = app.add_subcommand("evaluate", "Judge transcripts and compute metrics");
  add_agent_opts(evaluate, true);
  auto* report = app.add_subcommand("report", "Comparison table across the four agents");
  add_agent_opts(report, false);

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "HTTP session service for human-mode sessions");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  add_agent_opts(serve, false);

  std::string buckets = "none";
  std::size_t quota = 0;
  auto* pairs = app.add_subcommand("pairs", "Build the (q1, q2) pair file from the corpus");
  pairs->add_option("--buckets", buckets, "Similarity buckets by question embedding")
      ->check(CLI::IsMember({"none", "finqa", "convqa"}))
      ->capture_default_str();
  pairs->add_option("--quota", quota, "Pairs per bucket (0 keeps the preset)");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.backend.kind = pk::gateway::backend_kind_from_string(backend);
    cfg.backend.timeout = std::chrono::milliseconds(timeout_ms);
    cfg.backend.retry_base = std::chrono::milliseconds(retry_base_ms);
    cfg.train.max_turns = max_turns;
    cfg.train.reward = cfg.reward;
    cfg.judge = judge == "rule" ? pl::JudgeMode::Rule
                                : judge == "llm" ? pl::JudgeMode::Llm : pl::JudgeMode::Auto;
    cfg.simulator = simulator == "llm" ? pl::SimulatorMode::Llm : pl::SimulatorMode::Rule;
    cfg.agent = pk::agents::agent_kind_from_string(agent);
    cfg.validate();

    const auto* sub = app.get_subcommands().front();
    print_config(cfg, sub->get_name());
    const pl::Logger log = [](const std::string& msg) { std::cout << msg << std::endl; };

    if (sub == sft) {
      pl::sft(cfg, log);
      return 0;
    }
    auto gw = pl::make_gateway(cfg);
    if (sub == synth) {
      pl::synth_data(cfg, *gw, log);
    } else if (sub == rl) {
      pl::rl_train(cfg, *gw, log);
    } else if (sub == simulate) {
      pl::simulate(cfg, cfg.agent, *gw, log);
    } else if (sub == evaluate) {
      pl::evaluate(cfg, cfg.agent, *gw, log);
    } else if (sub == report) {
      const auto rows = pl::report(cfg, *gw, log);
      std::cout << pk::eval::render_table(rows);
      std::cout << "wrote " << pl::paths_for(cfg).report_json().string() << std::endl;
    } else if (sub == pairs) {
      std::vector<pk::corpus::PairSpec> built;
      const auto items = pk::corpus::load_corpus(cfg.corpus_path);
      const auto halves = pk::corpus::partition(items, cfg.seed);
      if (buckets == "none") {
        built = pk::corpus::make_pairs(halves, cfg.pairs, cfg.seed);
      } else {
        auto spec = buckets == "finqa" ? pk::corpus::BucketSpec::finqa()
                                       : pk::corpus::BucketSpec::convqa();
        if (quota > 0) spec = spec.with_quota(quota);
        built = pk::corpus::make_bucketed_pairs(halves, spec, *gw, cfg.seed);
      }
      const auto out = pl::paths_for(cfg).pairs();
      std::filesystem::create_directories(out.parent_path());
      pk::corpus::save_pairs(built, out);
      std::cout << "wrote " << built.size() << " pairs to " << out.string() << std::endl;
    } else if (sub == serve) {
      pk::service::SessionService service(cfg, *gw);
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving on http://" << host << ":" << port << std::endl;
      service.serve(host, port);
      g_service = nullptr;
    }
    return 0;
  } catch (const pk::ConfigError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const pk::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
}
