#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tfl/frequency.hpp"
#include "tfl/journal.hpp"
#include "tfl/provider.hpp"
#include "tfl/tokenizer.hpp"

namespace tfl {

inline constexpr std::string_view kParaphraseDelimiter = "||||";
inline constexpr size_t kParaphraseCount = 20;

// The rephrasing instruction with the sentence substituted.
std::string paraphrase_prompt(std::string_view sentence);

enum class JobStatus { kGenerated, kInAnnotation, kAccepted, kRejected };
enum class Verdict { kSame, kMaybeSame, kNotSame };

std::string_view job_status_name(JobStatus status);
std::string_view verdict_name(Verdict verdict);
Verdict parse_verdict(std::string_view name);

struct ParaphraseJob {
  uint64_t job_id = 0;
  std::string source_id;
  std::string original;
  std::vector<std::string> candidates;
  std::string low_text;
  std::string high_text;
  double low_log_sfreq = 0.0;
  double high_log_sfreq = 0.0;
  JobStatus status = JobStatus::kGenerated;
  std::string reject_reason;
  nlohmann::json ground_truth;
  std::map<std::string, Verdict> verdicts;  // annotator -> latest verdict

  bool finalized() const noexcept { return status == JobStatus::kAccepted || status == JobStatus::kRejected; }
};

// Builds a job from a provider completion: split on "||||", trim, require
// exactly 20 non-empty parts, then pick the lowest/highest-frequency pair.
// Failures yield a Rejected job with reason "malformed-generation",
// "unscoreable-candidate" or "degenerate-extremes".
ParaphraseJob job_from_completion(std::string source_id, std::string sentence, std::string_view completion,
                                  const SentenceScorer& scorer);

// Calls the provider with paraphrase_prompt(sentence); a provider failure
// yields a Rejected job with reason "provider-error".
ParaphraseJob generate_job(std::string source_id, std::string sentence, CompletionProvider& provider,
                           const SentenceScorer& scorer);

struct Judgment {
  uint64_t job_id = 0;
  std::string annotator_id;
  Verdict verdict = Verdict::kSame;
  int64_t timestamp_ms = 0;  // 0 means "now"
  std::string token;         // optional presentation token from next_item
};

// Roles shown to annotators, in presentation order.
enum class SentenceRole { kOriginal = 0, kLow = 1, kHigh = 2 };

struct AnnotationItem {
  uint64_t job_id = 0;
  std::array<std::string, 3> sentences;
  std::array<SentenceRole, 3> roles;  // server-side only, never sent to clients
  std::string token;
};

struct TfpdRecord {
  std::string source_id;
  std::string high_text;
  std::string low_text;
  nlohmann::json ground_truth;

  nlohmann::json to_json() const;
};

struct PartitionStats {
  size_t count = 0;
  double mean = 0.0;
  size_t max = 0;
  size_t min = 0;
};

PartitionStats length_stats(const std::vector<size_t>& lengths);

struct ExportStats {
  size_t records = 0;
  PartitionStats high;
  PartitionStats low;

  nlohmann::json to_json() const;
};

struct Progress {
  std::map<std::string, size_t> by_status;
  size_t jobs = 0;
  size_t judgments = 0;

  nlohmann::json to_json() const;
};

struct PipelineConfig {
  std::filesystem::path journal;
  std::vector<std::string> annotators{"annotator-1", "annotator-2", "annotator-3"};
  uint64_t seed = 0;
  TokenizerConfig tokenizer;
};

// Jobs and judgments live in memory and every change is written ahead to the
// journal, so restarting on the same journal restores the exact state. All
// methods are thread-safe; writes are serialized through one mutex.
class TfpdPipeline {
 public:
  explicit TfpdPipeline(PipelineConfig config);

  const PipelineConfig& config() const noexcept { return config_; }

  // Stores a generated job and returns its id. A source id that is already
  // present is not added twice; the existing job id is returned.
  uint64_t add_job(ParaphraseJob job);

  // Generates and stores one job per source record, requesting completions
  // with bounded parallelism. Returns the ids in input order.
  struct SourceRecord {
    std::string source_id;
    std::string text;
    nlohmann::json ground_truth;
  };
  std::vector<uint64_t> ingest(const std::vector<SourceRecord>& sources, CompletionProvider& provider,
                               const SentenceScorer& scorer, size_t parallelism = 4);

  // Oldest unfinalized job this annotator has not judged yet, with the three
  // sentences shuffled. The shuffle is journaled under the returned token.
  std::optional<AnnotationItem> next_item(const std::string& annotator_id);

  JobStatus record_judgment(const Judgment& judgment);

  std::optional<ParaphraseJob> job(uint64_t job_id) const;
  std::vector<ParaphraseJob> jobs() const;
  Progress progress() const;

  // Accepted jobs as records, ordered by source id.
  std::vector<TfpdRecord> records() const;
  ExportStats stats(const std::vector<TfpdRecord>& records) const;

  // Writes the records as JSON lines to `destination` and the statistics to
  // `destination` + ".stats.json", both atomically.
  ExportStats export_tfpd(const std::filesystem::path& destination) const;

 private:
  bool is_annotator(std::string_view id) const;
  void apply(const nlohmann::json& event);
  void apply_judgment(uint64_t job_id, const std::string& annotator, Verdict verdict);
  ParaphraseJob* find(uint64_t job_id);

  PipelineConfig config_;
  mutable std::mutex mutex_;
  std::unique_ptr<Journal> journal_;
  std::map<uint64_t, ParaphraseJob> jobs_;
  std::unordered_map<std::string, uint64_t> by_source_;
  struct Presentation {
    uint64_t job_id;
    std::string annotator;
  };
  std::unordered_map<std::string, Presentation> presentations_;
  uint64_t next_job_id_ = 1;
  size_t judgments_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace tfl
