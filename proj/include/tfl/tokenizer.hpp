#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tfl {

struct TokenizerConfig {
  bool lowercase = true;
};

// Splits UTF-8 text into maximal runs of letters, digits and combining marks.
// Everything else (whitespace, punctuation, symbols) separates tokens and is
// dropped. Invalid UTF-8 bytes act as separators. Deterministic.
std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& config = {});

}  // namespace tfl
