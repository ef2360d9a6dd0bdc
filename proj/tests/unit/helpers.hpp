#pragma once

#include <filesystem>
#include <string>

#include "probekit/dialogue.hpp"

namespace testing {

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("probekit-unit-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(PROBEKIT_SOURCE_DIR) / rel;
}

inline probekit::TargetInfo sample_target() {
  return {"t-1", "What was your total salary last year?", "It was 82,000 dollars.",
          "Annual compensation figure."};
}

inline probekit::Annotations ann(bool question, bool refusal = false, bool reveal = false,
                                 bool ends = false) {
  return {question, refusal, reveal, ends};
}

}  // namespace testing
