#include <doctest.h>

#include <fstream>
#include <set>

#include "helpers.hpp"
#include "probekit/corpus.hpp"
#include "probekit/errors.hpp"
#include "probekit/gateway.hpp"
#include "probekit/text.hpp"

using namespace probekit;
using namespace probekit::corpus;

namespace {

std::vector<CorpusItem> items(std::size_t n) {
  std::vector<CorpusItem> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "i" + std::to_string(i);
    out.push_back({id, "Question " + id + "?", "", "Answer " + id + ".", "test"});
  }
  return out;
}

void write(const std::filesystem::path& p, const std::string& content) {
  std::ofstream(p) << content;
}

}  // namespace

TEST_CASE("toy corpus") {
  const auto c = load_corpus(testing::source_path("data/toy_corpus.jsonl"));
  CHECK(c.size() == 24);
  std::set<std::string> ids;
  for (const auto& i : c) ids.insert(i.id);
  CHECK(ids.size() == 24);
  const auto t = to_target(c.front());
  CHECK(t.id == c.front().id);
  CHECK(t.question == c.front().question);
  CHECK(t.reference_answer == c.front().reference_answer);
}

TEST_CASE("corpus load errors") {
  const auto dir = testing::fresh_dir("corpus");
  write(dir / "missing.jsonl",
        "{\"id\":\"a\",\"question\":\"q?\",\"reference_answer\":\"r\"}\n"
        "{\"id\":\"b\",\"reference_answer\":\"r\"}\n");
  try {
    load_corpus(dir / "missing.jsonl");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(text::contains(e.what(), "line 2"));
  }
  write(dir / "dup.jsonl",
        "{\"id\":\"a\",\"question\":\"q?\",\"reference_answer\":\"r\"}\n"
        "{\"id\":\"a\",\"question\":\"q2?\",\"reference_answer\":\"r\"}\n");
  try {
    load_corpus(dir / "dup.jsonl");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(text::contains(e.what(), "'a'"));
  }
  CHECK_THROWS_AS(load_corpus(dir / "absent.jsonl"), IoError);
}

TEST_CASE("partition") {
  auto h = partition(items(10), 1);
  CHECK(h.a.size() == 5);
  CHECK(h.b.size() == 5);
  std::set<std::string> a;
  for (const auto& i : h.a) a.insert(i.id);
  for (const auto& i : h.b) CHECK(a.count(i.id) == 0);
  h = partition(items(11), 1);
  CHECK(h.a.size() == 6);
  CHECK(h.b.size() == 5);
  CHECK(partition(items(11), 4).a == partition(items(11), 4).a);
}

TEST_CASE("pairs") {
  const auto h = partition(items(4), 2);
  const auto one = make_pairs(h, 1, 3);
  REQUIRE(one.size() == 1);
  CHECK(one == make_pairs(h, 1, 3));
  CHECK(one[0].id == "pair-0001");
  const auto all = make_pairs(h, 4, 3);
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& p : all) seen.insert({p.user_item.id, p.target_item.id});
  CHECK(seen.size() == 4);
  CHECK_THROWS_AS(make_pairs(h, 5, 3), ShortfallError);

  const auto dir = testing::fresh_dir("pairs");
  save_pairs(all, dir / "p.jsonl");
  CHECK(load_pairs(dir / "p.jsonl") == all);
}

TEST_CASE("bucket specs") {
  const auto f = BucketSpec::finqa();
  CHECK_NOTHROW(f.validate());
  REQUIRE(f.buckets.size() == 3);
  std::size_t total = 0;
  for (const auto& b : f.buckets) {
    CHECK(b.quota == 400);
    total += b.quota;
  }
  CHECK(total == 1200);
  CHECK(f.find(0.80)->lo == 0.80);
  CHECK(f.find(0.7999)->lo == 0.60);
  CHECK(f.find(1.0) != nullptr);
  CHECK(f.find(0.59)->hi == 0.60);
  CHECK(BucketSpec::convqa().find(0.64)->hi == 0.65);
  CHECK(BucketSpec::convqa().find(0.65)->lo == 0.65);

  BucketSpec bad{{{"x", 0.5, 0.4, 1}}};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("bucketed pairing") {
  const auto c = load_corpus(testing::source_path("data/toy_corpus.jsonl"));
  const auto h = partition(c, 1);
  gateway::Gateway gw(std::make_unique<gateway::MockBackend>(0), 4);
  BucketSpec spec{{{"low", -1.0, 0.5, 3}, {"high", 0.5, std::nextafter(1.0, 2.0), 0}}};
  const auto pairs = make_bucketed_pairs(h, spec, gw, 2);
  CHECK(pairs.size() == 3);
  for (const auto& p : pairs) {
    REQUIRE(p.similarity);
    CHECK(*p.similarity < 0.5);
    CHECK(p.bucket == "low");
  }
  try {
    make_bucketed_pairs(h, BucketSpec::finqa(), gw, 2);
    FAIL("expected ShortfallError");
  } catch (const ShortfallError& e) {
    CHECK(text::contains(e.what(), "available"));
  }
}
