#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "probekit/dialogue.hpp"

namespace probekit::gateway {
class Gateway;
}

namespace probekit::corpus {

struct CorpusItem {
  std::string id;
  std::string question;
  std::string context;
  std::string reference_answer;
  std::string source;

  bool operator==(const CorpusItem&) const = default;
};

Json to_json(const CorpusItem& item);
CorpusItem item_from_json(const Json& j);

// Parse errors name the 1-based line; duplicate ids raise ValidationError.
std::vector<CorpusItem> load_corpus(const std::filesystem::path& path);

TargetInfo to_target(const CorpusItem& item);

struct Halves {
  std::vector<CorpusItem> a;
  std::vector<CorpusItem> b;
};

// Seeded shuffle and split; with an odd count the extra item goes to half A.
Halves partition(const std::vector<CorpusItem>& items, std::uint64_t seed);

struct PairSpec {
  std::string id;
  CorpusItem user_item;    // q_1, from half A
  CorpusItem target_item;  // q_2, from half B
  std::optional<double> similarity;
  std::optional<std::string> bucket;

  bool operator==(const PairSpec&) const = default;
};

Json to_json(const PairSpec& p);
PairSpec pair_from_json(const Json& j);
void save_pairs(const std::vector<PairSpec>& pairs, const std::filesystem::path& path);
std::vector<PairSpec> load_pairs(const std::filesystem::path& path);

// Uniform cross-half sampling without replacement. ShortfallError when n
// exceeds |A| * |B|.
std::vector<PairSpec> make_pairs(const Halves& halves, std::size_t n, std::uint64_t seed);

// Half-open similarity range [lo, hi) with a pair quota. A bucket whose hi is
// above 1 also admits similarity exactly 1.
struct Bucket {
  std::string label;
  double lo = -1.0;
  double hi = 1.0;
  std::size_t quota = 0;
};

struct BucketSpec {
  std::vector<Bucket> buckets;

  // Buckets must be sorted, contiguous and lie within [-1, 1].
  void validate() const;
  const Bucket* find(double similarity) const;

  // >= 0.80, [0.60, 0.80), < 0.60 with 400 pairs each.
  static BucketSpec finqa();
  // Same with the middle bucket starting at 0.65.
  static BucketSpec convqa();
  BucketSpec with_quota(std::size_t quota) const;
};

// Cosine similarity of question embeddings decides the bucket. ShortfallError
// names the bucket and its available count when a quota cannot be met.
std::vector<PairSpec> make_bucketed_pairs(const Halves& halves, const BucketSpec& spec,
                                          gateway::Gateway& embedder, std::uint64_t seed);

}  // namespace probekit::corpus
