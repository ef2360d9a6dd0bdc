#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace probekit::text {

std::string trim(std::string_view s);

// Lowercased alphanumeric tokens; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view s);

// tokenize() minus a small English stopword list.
std::vector<std::string> content_tokens(std::string_view s);

// Fraction of the distinct content tokens of `reference` that also occur in
// `candidate`. Zero when `reference` has no content tokens.
double token_overlap(std::string_view reference, std::string_view candidate);

std::size_t count_char(std::string_view s, char c);

bool contains(std::string_view haystack, std::string_view needle);

std::string to_lower(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// 64-bit FNV-1a; stable across platforms, used for mock scripting.
std::uint64_t fnv1a(std::string_view s);

std::string sha256_hex(std::string_view data);

}  // namespace probekit::text
