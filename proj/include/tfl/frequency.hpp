#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tfl/table.hpp"
#include "tfl/tokenizer.hpp"

namespace tfl {

// Relative-frequency floor used only while scoring. Raw zero counts stay in
// the table, where the distillation indicator needs them.
struct SmoothingPolicy {
  double floor = 1e-9;
};

// Log-space sentence frequency: the geometric mean of the per-token relative
// frequencies, so a higher score means a more frequent sentence.
struct SentenceScore {
  std::string text;
  size_t token_count = 0;
  double log_sfreq = 0.0;   // natural log
  double zipf_sfreq = 0.0;  // log10(sfreq) + 9
};

// count/total; 0 for absent tokens. Throws kEmptyTable when total == 0.
double word_frequency(std::string_view token, const FrequencyTable& table);

// log10(relative) + 9, i.e. occurrences per billion on a log scale.
double zipf_scale(double relative);
// Inverse of zipf_scale.
double zipf_to_relative(double zipf);

using TokenFrequencyFn = std::function<double(std::string_view token)>;

// Shared scoring core: mean of ln(max(freq(token), floor)) over the tokens.
// Never forms a product of raw probabilities.
SentenceScore score_tokens(std::string text, std::span<const std::string> tokens, const TokenFrequencyFn& freq,
                           const SmoothingPolicy& smoothing);

SentenceScore sentence_frequency(std::string_view text, const FrequencyTable& table,
                                 const SmoothingPolicy& smoothing = {}, const TokenizerConfig& tokenizer = {});

// Scores text -> SentenceScore. Used by selection and the paraphrase pipeline.
using SentenceScorer = std::function<SentenceScore(std::string_view text)>;

SentenceScorer make_table_scorer(const FrequencyTable& table, SmoothingPolicy smoothing = {},
                                 TokenizerConfig tokenizer = {});

struct Histogram {
  std::vector<double> edges;
  std::vector<size_t> counts;  // counts[i] covers [edges[i], edges[i+1])
  size_t below = 0;            // value < edges.front()
  size_t above = 0;            // value >= edges.back(), or NaN
};

Histogram bin_histogram(std::span<const double> values, std::span<const double> edges);

}  // namespace tfl
