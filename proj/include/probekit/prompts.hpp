#pragma once

#include <string>
#include <string_view>
#include <vector>

// Prompt templates compiled in from assets/prompts/<version>/*.txt.
namespace probekit::prompts {

std::string_view version();

// Throws ValidationError for an unknown name.
std::string_view asset(std::string_view name);

std::vector<std::string_view> asset_names();

// Replaces every occurrence of `placeholder` in `text`.
std::string fill(std::string text, std::string_view placeholder, std::string_view value);

inline constexpr std::string_view kRefusalSentence = "I do not want to answer right now.";

}  // namespace probekit::prompts
