#include "probekit/text.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include "probekit/errors.hpp"
#include "probekit/prompts.hpp"

namespace probekit::text {
namespace {

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words{
      "a",     "an",    "and",   "are",  "as",    "at",   "be",    "been",  "but",  "by",
      "can",   "could", "did",   "do",   "does",  "for",  "from",  "had",   "has",  "have",
      "how",   "i",     "if",    "in",   "into",  "is",   "it",    "its",   "me",   "my",
      "of",    "on",    "or",    "our",  "so",    "some", "that",  "the",   "their", "them",
      "then",  "there", "these", "they", "this",  "to",   "was",   "we",    "were", "what",
      "when",  "which", "while", "who",  "will",  "with", "would", "you",   "your", "about",
      "also",  "any",   "just",  "more", "much",  "than", "very",  "why",   "where", "s",
      "t",     "up",    "out",   "all",  "like",  "know", "tell",  "please"};
  return words;
}

}  // namespace

std::string trim(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> content_tokens(std::string_view s) {
  auto tokens = tokenize(s);
  std::erase_if(tokens, [](const std::string& t) { return stopwords().contains(t); });
  return tokens;
}

double token_overlap(std::string_view reference, std::string_view candidate) {
  auto ref = content_tokens(reference);
  std::set<std::string> ref_set(ref.begin(), ref.end());
  if (ref_set.empty()) return 0.0;
  auto cand = content_tokens(candidate);
  std::set<std::string> cand_set(cand.begin(), cand.end());
  std::size_t shared = 0;
  for (const auto& t : ref_set) shared += cand_set.contains(t) ? 1 : 0;
  return static_cast<double>(shared) / static_cast<double>(ref_set.size());
}

std::size_t count_char(std::string_view s, char c) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), c));
}

bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(s.substr(start));
      break;
    }
    auto line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = nl + 1;
  }
  return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace probekit::text

namespace probekit::prompts {

std::string fill(std::string text, std::string_view placeholder, std::string_view value) {
  if (placeholder.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(placeholder, pos)) != std::string::npos) {
    text.replace(pos, placeholder.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace probekit::prompts
