#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "probekit/errors.hpp"
#include "probekit/pipeline.hpp"
#include "probekit/text.hpp"

using namespace probekit;
using namespace probekit::pipeline;

namespace {

RunConfig small_config(const std::string& name) {
  RunConfig c;
  c.corpus_path = testing::source_path("data/toy_corpus.jsonl");
  c.output_dir = testing::fresh_dir(name);
  c.pairs = 6;
  c.synth.sessions = 40;
  c.sft.epochs = 2;
  c.train.episodes = 20;
  c.train.eval_every = 10;
  c.eval_episodes = 4;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const Logger quiet = [](const std::string&) {};

}  // namespace

TEST_CASE("config validation") {
  auto c = small_config("cfg");
  CHECK_NOTHROW(c.validate());
  CHECK(c.to_json()["seed"] == 7);
  c.corpus_path = "/nonexistent/corpus.jsonl";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("missing artifacts name the producing command") {
  auto c = small_config("missing");
  try {
    sft(c, quiet);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(text::contains(e.what(), "synth-data"));
  }
  auto gw = make_gateway(c);
  try {
    rl_train(c, *gw, quiet);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(text::contains(e.what(), "sft"));
  }
  try {
    resolve_policy(c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(text::contains(e.what(), "rl-train"));
  }
}

TEST_CASE("full offline pipeline") {
  auto c = small_config("full");
  auto gw = make_gateway(c);
  const auto paths = paths_for(c);

  CHECK(synth_data(c, *gw, quiet) == paths.dataset());
  CHECK(sft(c, quiet) == paths.sft_policy());
  // resolve_policy falls back to the sft checkpoint before rl-train has run.
  CHECK(resolve_policy(c) == policy::load_checkpoint(paths.sft_policy()));
  CHECK(rl_train(c, *gw, quiet) == paths.rl_policy());
  CHECK(std::filesystem::exists(paths.train_log()));
  CHECK(std::filesystem::exists(paths.checkpoints() / "rl_ep10.json"));
  CHECK(resolve_policy(c) == policy::load_checkpoint(paths.rl_policy()));

  const auto pairs = load_or_make_pairs(c, quiet);
  CHECK(pairs.size() == 6);
  CHECK(std::filesystem::exists(paths.pairs()));

  simulate(c, agents::AgentKind::Vanilla, *gw, quiet);
  const auto vanilla = evaluate(c, agents::AgentKind::Vanilla, *gw, quiet);
  CHECK(vanilla.aggregate.sessions == 6);
  CHECK(vanilla.aggregate.tsr == 0.0);
  CHECK(vanilla.aggregate.probes == 0);
  CHECK(std::filesystem::exists(paths.verdicts(agents::AgentKind::Vanilla)));
  CHECK(std::filesystem::exists(paths.metrics(agents::AgentKind::Vanilla)));

  const auto rows = report(c, *gw, quiet);
  REQUIRE(rows.size() == 4);
  const auto table = slurp(paths.report_txt());
  for (auto kind : agents::kAllAgents) {
    CHECK(text::contains(table, std::string(agents::to_string(kind))));
  }
  CHECK(slurp(paths.report_csv()).starts_with("method,"));
  CHECK(Json::parse(slurp(paths.report_json()))["rows"].size() == 4);
}

TEST_CASE("reruns are byte-identical") {
  std::vector<std::string> runs;
  for (int k = 0; k < 2; ++k) {
    auto c = small_config("rerun");
    auto gw = make_gateway(c);
    const auto sessions = simulate(c, agents::AgentKind::Proactive, *gw, quiet);
    CHECK(sessions.size() == 6);
    runs.push_back(slurp(paths_for(c).transcripts(agents::AgentKind::Proactive)));
    CHECK(load_transcripts(paths_for(c).transcripts(agents::AgentKind::Proactive)).size() == 6);
  }
  CHECK_FALSE(runs[0].empty());
  CHECK(runs[0] == runs[1]);
}

TEST_CASE("profiles draw instructions from the given combinations") {
  auto c = small_config("profile");
  const auto pairs = load_or_make_pairs(c, quiet);
  const std::vector<usersim::Combination> combos{{1, 2}, {6}};
  const auto p = make_profile(pairs[0], 0, 3, combos);
  CHECK((p.instructions == combos[0] || p.instructions == combos[1]));
  CHECK(p.target.question == pairs[0].target_item.question);
  CHECK(p == make_profile(pairs[0], 0, 3, combos));
}
