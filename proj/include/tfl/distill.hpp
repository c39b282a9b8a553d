#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "tfl/frequency.hpp"
#include "tfl/provider.hpp"
#include "tfl/table.hpp"
#include "tfl/tokenizer.hpp"

namespace tfl {

inline constexpr std::string_view kStoryCompletionInstruction =
    "Please conduct story completion on the following data: ";

std::string story_completion_prompt(std::string_view text);

struct DistillOptions {
  size_t completions_per_text = 1;
  size_t parallelism = 4;
  int max_output_tokens = 256;
  double temperature = 1.0;
  std::string label = "distilled-D-prime";
  TokenizerConfig tokenizer;
};

struct DistillResult {
  FrequencyTable table;
  size_t requested = 0;
  size_t skipped = 0;                 // failed completions
  std::vector<std::string> failures;  // one message per skipped completion
};

// Asks the provider to continue every text as a story and counts the tokens
// of all completions into one table. Throws kEmptyDistillation when nothing
// came back.
DistillResult distill_corpus(const std::vector<std::string>& texts, CompletionProvider& provider,
                             const DistillOptions& options = {});

struct CombineConfig {
  double alpha = 0.5;  // weight on the base estimate
  double beta = 0.5;   // weight on the distilled estimate
  double zeta = 1.0;   // extra weight on the distilled estimate for tokens unseen in the base

  void validate() const;
};

// alpha*f1 + (1 + zeta*[f1 == 0]) * beta*f2. f1 is the raw, unsmoothed base frequency.
double combine_frequency(double f1, double f2, const CombineConfig& config);

// Both tables are referenced, not copied; they must outlive this object.
class CombinedTable {
 public:
  CombinedTable(const FrequencyTable& base, const FrequencyTable& distilled, CombineConfig config);

  const FrequencyTable& base() const noexcept { return *base_; }
  const FrequencyTable& distilled() const noexcept { return *distilled_; }
  const CombineConfig& config() const noexcept { return config_; }

 private:
  const FrequencyTable* base_;
  const FrequencyTable* distilled_;
  CombineConfig config_;
};

// An empty table contributes frequency 0 on its side.
double combined_word_frequency(std::string_view token, const CombinedTable& combined);

// Same contract as sentence_frequency; the floor applies after combination.
SentenceScore combined_sentence_frequency(std::string_view text, const CombinedTable& combined,
                                          const SmoothingPolicy& smoothing = {},
                                          const TokenizerConfig& tokenizer = {});

SentenceScorer make_combined_scorer(const CombinedTable& combined, SmoothingPolicy smoothing = {},
                                    TokenizerConfig tokenizer = {});

}  // namespace tfl
