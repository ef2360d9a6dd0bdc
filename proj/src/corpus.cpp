#include "probekit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "probekit/errors.hpp"
#include "probekit/gateway.hpp"
#include "probekit/random.hpp"
#include "probekit/text.hpp"

namespace probekit::corpus {

Json to_json(const CorpusItem& item) {
  return Json{{"id", item.id},
              {"question", item.question},
              {"context", item.context},
              {"reference_answer", item.reference_answer},
              {"source", item.source}};
}

CorpusItem item_from_json(const Json& j) {
  CorpusItem item;
  item.id = j.at("id").get<std::string>();
  item.question = j.at("question").get<std::string>();
  item.context = j.value("context", "");
  item.reference_answer = j.at("reference_answer").get<std::string>();
  item.source = j.value("source", "");
  if (text::trim(item.id).empty()) throw ValidationError("corpus item has an empty id");
  if (text::trim(item.question).empty()) {
    throw ValidationError("corpus item '" + item.id + "' has an empty question");
  }
  return item;
}

std::vector<CorpusItem> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::vector<CorpusItem> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    CorpusItem item;
    try {
      item = item_from_json(Json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what(), line);
    } catch (const ValidationError& e) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what(), line);
    }
    if (!seen.insert(item.id).second) {
      throw ValidationError("duplicate corpus id '" + item.id + "' at line " +
                            std::to_string(lineno));
    }
    out.push_back(std::move(item));
  }
  return out;
}

TargetInfo to_target(const CorpusItem& item) {
  TargetInfo t{item.id, item.question, item.reference_answer, item.context};
  t.validate();
  return t;
}

Halves partition(const std::vector<CorpusItem>& items, std::uint64_t seed) {
  if (items.size() < 2) throw ValidationError("partition needs at least 2 corpus items");
  auto shuffled = items;
  Rng rng(seed);
  rng.shuffle(shuffled);
  const auto split = shuffled.begin() + static_cast<std::ptrdiff_t>((shuffled.size() + 1) / 2);
  return {{shuffled.begin(), split}, {split, shuffled.end()}};
}

Json to_json(const PairSpec& p) {
  Json j{{"id", p.id}, {"user_item", to_json(p.user_item)}, {"target_item", to_json(p.target_item)}};
  j["similarity"] = p.similarity ? Json(*p.similarity) : Json(nullptr);
  j["bucket"] = p.bucket ? Json(*p.bucket) : Json(nullptr);
  return j;
}

PairSpec pair_from_json(const Json& j) {
  PairSpec p;
  p.id = j.at("id").get<std::string>();
  p.user_item = item_from_json(j.at("user_item"));
  p.target_item = item_from_json(j.at("target_item"));
  if (auto it = j.find("similarity"); it != j.end() && !it->is_null()) p.similarity = it->get<double>();
  if (auto it = j.find("bucket"); it != j.end() && !it->is_null()) p.bucket = it->get<std::string>();
  if (p.user_item.id == p.target_item.id) {
    throw ValidationError("pair '" + p.id + "' uses the same item twice");
  }
  return p;
}

void save_pairs(const std::vector<PairSpec>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pairs " + path.string());
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
  if (!out) throw IoError("failed writing pairs " + path.string());
}

std::vector<PairSpec> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pairs " + path.string());
  std::vector<PairSpec> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(pair_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what(), line);
    }
  }
  return out;
}

namespace {

std::string pair_id(std::size_t i) {
  auto s = std::to_string(i + 1);
  return "pair-" + std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

}  // namespace

std::vector<PairSpec> make_pairs(const Halves& halves, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ValidationError("make_pairs needs n >= 1");
  const auto available = halves.a.size() * halves.b.size();
  if (n > available) {
    throw ShortfallError("requested " + std::to_string(n) + " pairs but only " +
                         std::to_string(available) + " cross-half pairs exist");
  }
  std::vector<std::pair<std::size_t, std::size_t>> all;
  all.reserve(available);
  for (std::size_t i = 0; i < halves.a.size(); ++i) {
    for (std::size_t k = 0; k < halves.b.size(); ++k) all.emplace_back(i, k);
  }
  Rng rng(seed);
  rng.shuffle(all);
  std::vector<PairSpec> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(PairSpec{pair_id(i), halves.a[all[i].first], halves.b[all[i].second],
                           std::nullopt, std::nullopt});
  }
  return out;
}

void BucketSpec::validate() const {
  if (buckets.empty()) throw ValidationError("bucket spec is empty");
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    const auto& b = buckets[i];
    if (!(b.lo < b.hi)) throw ValidationError("bucket '" + b.label + "' has lo >= hi");
    if (b.lo < -1.0 || b.hi > std::nextafter(1.0, 2.0)) {
      throw ValidationError("bucket '" + b.label + "' lies outside [-1, 1]");
    }
    if (i > 0 && buckets[i - 1].hi != b.lo) {
      throw ValidationError("buckets must be sorted and contiguous");
    }
  }
}

const Bucket* BucketSpec::find(double s) const {
  for (const auto& b : buckets) {
    if (s >= b.lo && (s < b.hi || (b.hi > 1.0 && s <= 1.0))) return &b;
  }
  return nullptr;
}

BucketSpec BucketSpec::finqa() {
  const double top = std::nextafter(1.0, 2.0);
  return {{{"low", -1.0, 0.60, 400}, {"mid", 0.60, 0.80, 400}, {"high", 0.80, top, 400}}};
}

BucketSpec BucketSpec::convqa() {
  const double top = std::nextafter(1.0, 2.0);
  return {{{"low", -1.0, 0.65, 400}, {"mid", 0.65, 0.80, 400}, {"high", 0.80, top, 400}}};
}

BucketSpec BucketSpec::with_quota(std::size_t quota) const {
  auto copy = *this;
  for (auto& b : copy.buckets) b.quota = quota;
  return copy;
}

std::vector<PairSpec> make_bucketed_pairs(const Halves& halves, const BucketSpec& spec,
                                          gateway::Gateway& embedder, std::uint64_t seed) {
  spec.validate();
  auto embed_all = [&](const std::vector<CorpusItem>& items) {
    std::vector<std::vector<double>> out;
    for (const auto& it : items) out.push_back(embedder.embed(it.question));
    return out;
  };
  const auto ea = embed_all(halves.a);
  const auto eb = embed_all(halves.b);

  struct Candidate {
    std::size_t a, b;
    double sim;
  };
  std::map<std::string, std::vector<Candidate>> by_bucket;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    for (std::size_t k = 0; k < eb.size(); ++k) {
      const double s = std::clamp(gateway::cosine(ea[i], eb[k]), -1.0, 1.0);
      if (const auto* b = spec.find(s)) by_bucket[b->label].push_back({i, k, s});
    }
  }
  std::vector<PairSpec> out;
  Rng rng(seed);
  for (const auto& bucket : spec.buckets) {
    auto& pool = by_bucket[bucket.label];
    if (pool.size() < bucket.quota) {
      throw ShortfallError("bucket '" + bucket.label + "' needs " + std::to_string(bucket.quota) +
                           " pairs but only " + std::to_string(pool.size()) + " are available");
    }
    rng.shuffle(pool);
    for (std::size_t i = 0; i < bucket.quota; ++i) {
      const auto& c = pool[i];
      out.push_back(PairSpec{pair_id(out.size()), halves.a[c.a], halves.b[c.b], c.sim,
                             bucket.label});
    }
  }
  return out;
}

}  // namespace probekit::corpus
