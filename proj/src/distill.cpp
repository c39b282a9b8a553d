#include "tfl/distill.hpp"

#include <cmath>

#include "tfl/error.hpp"
#include "tfl/records.hpp"

namespace tfl {

std::string story_completion_prompt(std::string_view text) {
  std::string prompt(kStoryCompletionInstruction);
  prompt += text;
  return prompt;
}

DistillResult distill_corpus(const std::vector<std::string>& texts, CompletionProvider& provider,
                             const DistillOptions& options) {
  if (texts.empty()) throw Error(ErrorCode::kPrecondition, "distillation needs at least one text");
  if (options.completions_per_text == 0) throw Error(ErrorCode::kConfig, "completions_per_text must be >= 1");

  std::vector<CompletionRequest> requests;
  requests.reserve(texts.size() * options.completions_per_text);
  for (const auto& text : texts) {
    for (size_t c = 0; c < options.completions_per_text; ++c) {
      requests.push_back({story_completion_prompt(text), options.max_output_tokens, options.temperature});
    }
  }
  auto results = complete_batch(provider, requests, options.parallelism);

  DistillResult out;
  out.requested = requests.size();
  TableBuilder builder;
  for (size_t i = 0; i < results.size(); ++i) {
    if (results[i].ok()) {
      builder.add_tokens(tokenize(*results[i].text, options.tokenizer));
    } else {
      ++out.skipped;
      out.failures.push_back("text " + std::to_string(i / options.completions_per_text) + ": " +
                             results[i].error->what());
    }
  }
  if (out.skipped == out.requested) {
    throw Error(ErrorCode::kEmptyDistillation, "all " + std::to_string(out.requested) + " completions failed");
  }
  out.table = std::move(builder).finalize(options.label);
  return out;
}

void CombineConfig::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(zeta >= 0.0)) {
    throw Error(ErrorCode::kConfig, "alpha, beta and zeta must be >= 0");
  }
  if (!(alpha + beta > 0.0)) throw Error(ErrorCode::kConfig, "alpha + beta must be > 0");
}

double combine_frequency(double f1, double f2, const CombineConfig& config) {
  const double indicator = f1 == 0.0 ? 1.0 : 0.0;
  return config.alpha * f1 + (1.0 + config.zeta * indicator) * config.beta * f2;
}

CombinedTable::CombinedTable(const FrequencyTable& base, const FrequencyTable& distilled, CombineConfig config)
    : base_(&base), distilled_(&distilled), config_(config) {
  config_.validate();
}

namespace {

double relative_or_zero(std::string_view token, const FrequencyTable& table) {
  return table.total() > 0.0 ? word_frequency(token, table) : 0.0;
}

}  // namespace

double combined_word_frequency(std::string_view token, const CombinedTable& combined) {
  return combine_frequency(relative_or_zero(token, combined.base()), relative_or_zero(token, combined.distilled()),
                           combined.config());
}

SentenceScore combined_sentence_frequency(std::string_view text, const CombinedTable& combined,
                                          const SmoothingPolicy& smoothing, const TokenizerConfig& tokenizer) {
  const auto tokens = tokenize(text, tokenizer);
  if (tokens.empty()) {
    throw Error(ErrorCode::kEmptySentence, "sentence has no tokens: '" + std::string(text) + "'");
  }
  return score_tokens(std::string(text), tokens,
                      [&combined](std::string_view token) { return combined_word_frequency(token, combined); },
                      smoothing);
}

SentenceScorer make_combined_scorer(const CombinedTable& combined, SmoothingPolicy smoothing,
                                    TokenizerConfig tokenizer) {
  return [&combined, smoothing, tokenizer](std::string_view text) {
    return combined_sentence_frequency(text, combined, smoothing, tokenizer);
  };
}

}  // namespace tfl
