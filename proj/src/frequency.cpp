#include "tfl/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tfl/error.hpp"
#include "tfl/records.hpp"

namespace tfl {

double word_frequency(std::string_view token, const FrequencyTable& table) {
  if (table.total() <= 0.0) {
    throw Error(ErrorCode::kEmptyTable, "frequency table '" + table.label() + "' is empty");
  }
  return table.count(token) / table.total();
}

double zipf_scale(double relative) {
  if (!(relative > 0.0)) throw Error(ErrorCode::kDomain, "zipf scale needs a positive frequency");
  return std::log10(relative) + 9.0;
}

double zipf_to_relative(double zipf) { return std::pow(10.0, zipf - 9.0); }

SentenceScore score_tokens(std::string text, std::span<const std::string> tokens, const TokenFrequencyFn& freq,
                           const SmoothingPolicy& smoothing) {
  if (!(smoothing.floor > 0.0)) throw Error(ErrorCode::kConfig, "smoothing floor must be positive");
  if (tokens.empty()) throw Error(ErrorCode::kEmptySentence, "sentence has no tokens: '" + text + "'");
  double sum = 0.0;
  for (const auto& token : tokens) {
    const double f = freq(token);
    if (std::isnan(f) || f < 0.0) throw Error(ErrorCode::kDomain, "invalid frequency for token '" + token + "'");
    sum += std::log(std::max(f, smoothing.floor));
  }
  SentenceScore score;
  score.text = std::move(text);
  score.token_count = tokens.size();
  score.log_sfreq = sum / static_cast<double>(tokens.size());
  score.zipf_sfreq = score.log_sfreq / std::numbers::ln10 + 9.0;
  return score;
}

SentenceScore sentence_frequency(std::string_view text, const FrequencyTable& table, const SmoothingPolicy& smoothing,
                                 const TokenizerConfig& tokenizer) {
  const auto tokens = tokenize(text, tokenizer);
  if (tokens.empty()) {
    throw Error(ErrorCode::kEmptySentence, "sentence has no tokens: '" + std::string(text) + "'");
  }
  return score_tokens(std::string(text), tokens,
                      [&table](std::string_view token) { return word_frequency(token, table); }, smoothing);
}

SentenceScorer make_table_scorer(const FrequencyTable& table, SmoothingPolicy smoothing, TokenizerConfig tokenizer) {
  return [&table, smoothing, tokenizer](std::string_view text) {
    return sentence_frequency(text, table, smoothing, tokenizer);
  };
}

Histogram bin_histogram(std::span<const double> values, std::span<const double> edges) {
  if (edges.size() < 2) throw Error(ErrorCode::kConfig, "histogram needs at least two edges");
  for (size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i - 1] < edges[i])) {
      throw Error(ErrorCode::kConfig, "histogram edges must be strictly ascending (edge " + std::to_string(i) +
                                          " = " + format_double(edges[i]) + ")");
    }
  }
  Histogram h;
  h.edges.assign(edges.begin(), edges.end());
  h.counts.assign(edges.size() - 1, 0);
  for (double v : values) {
    if (v < edges.front()) {
      ++h.below;
    } else if (!(v < edges.back())) {
      ++h.above;
    } else {
      // first edge strictly greater than v closes v's bin
      auto it = std::upper_bound(edges.begin(), edges.end(), v);
      ++h.counts[static_cast<size_t>(it - edges.begin()) - 1];
    }
  }
  return h;
}

}  // namespace tfl
