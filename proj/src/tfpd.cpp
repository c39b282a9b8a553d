#include "tfl/tfpd.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "tfl/error.hpp"
#include "tfl/policy.hpp"
#include "tfl/records.hpp"

namespace tfl {

std::string paraphrase_prompt(std::string_view sentence) {
  std::string prompt =
      "My goal is to transform the original sentence into both more common and less common expressions.\n"
      "Note: Do not omit any words such as verbs, adjectives, nouns, or adverbs.\n"
      "You must generate two types of sentences:\n"
      "(1) ten sentences using less common, more complex words.\n"
      "(2) ten sentences using more common, simpler words.\n"
      "Return all 20 sentences directly, separated by |||| and do not use numbering.\n"
      "Original sentence: ";
  prompt += sentence;
  return prompt;
}

std::string_view job_status_name(JobStatus status) {
  switch (status) {
    case JobStatus::kGenerated: return "Generated";
    case JobStatus::kInAnnotation: return "InAnnotation";
    case JobStatus::kAccepted: return "Accepted";
    case JobStatus::kRejected: return "Rejected";
  }
  return "?";
}

namespace {

JobStatus parse_job_status(std::string_view name) {
  for (auto s : {JobStatus::kGenerated, JobStatus::kInAnnotation, JobStatus::kAccepted, JobStatus::kRejected}) {
    if (job_status_name(s) == name) return s;
  }
  throw Error(ErrorCode::kFormat, "unknown job status '" + std::string(name) + "'");
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_candidates(std::string_view completion) {
  std::vector<std::string> parts;
  size_t pos = 0;
  while (true) {
    const auto next = completion.find(kParaphraseDelimiter, pos);
    parts.push_back(trim(completion.substr(pos, next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + kParaphraseDelimiter.size();
  }
  return parts;
}

ParaphraseJob rejected(ParaphraseJob job, std::string reason) {
  job.status = JobStatus::kRejected;
  job.reject_reason = std::move(reason);
  return job;
}

nlohmann::json job_to_json(const ParaphraseJob& job) {
  return {
      {"job_id", job.job_id},
      {"source_id", job.source_id},
      {"original", job.original},
      {"candidates", job.candidates},
      {"low_text", job.low_text},
      {"high_text", job.high_text},
      {"low_log_sfreq", job.low_log_sfreq},
      {"high_log_sfreq", job.high_log_sfreq},
      {"status", job_status_name(job.status)},
      {"reject_reason", job.reject_reason},
      {"ground_truth", job.ground_truth},
  };
}

ParaphraseJob job_from_json(const nlohmann::json& j) {
  ParaphraseJob job;
  job.job_id = j.at("job_id").get<uint64_t>();
  job.source_id = j.at("source_id").get<std::string>();
  job.original = j.at("original").get<std::string>();
  job.candidates = j.at("candidates").get<std::vector<std::string>>();
  job.low_text = j.at("low_text").get<std::string>();
  job.high_text = j.at("high_text").get<std::string>();
  job.low_log_sfreq = j.at("low_log_sfreq").get<double>();
  job.high_log_sfreq = j.at("high_log_sfreq").get<double>();
  job.status = parse_job_status(j.at("status").get<std::string>());
  job.reject_reason = j.at("reject_reason").get<std::string>();
  job.ground_truth = j.at("ground_truth");
  return job;
}

int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string_view verdict_name(Verdict verdict) {
  switch (verdict) {
    case Verdict::kSame: return "Same";
    case Verdict::kMaybeSame: return "MaybeSame";
    case Verdict::kNotSame: return "NotSame";
  }
  return "?";
}

Verdict parse_verdict(std::string_view name) {
  if (name == "Same") return Verdict::kSame;
  if (name == "MaybeSame") return Verdict::kMaybeSame;
  if (name == "NotSame") return Verdict::kNotSame;
  throw Error(ErrorCode::kPrecondition, "unknown verdict '" + std::string(name) + "'");
}

ParaphraseJob job_from_completion(std::string source_id, std::string sentence, std::string_view completion,
                                  const SentenceScorer& scorer) {
  ParaphraseJob job;
  job.source_id = std::move(source_id);
  job.original = std::move(sentence);
  job.candidates = split_candidates(completion);
  const bool any_empty =
      std::any_of(job.candidates.begin(), job.candidates.end(), [](const auto& c) { return c.empty(); });
  if (job.candidates.size() != kParaphraseCount || any_empty) return rejected(std::move(job), "malformed-generation");

  Extremes extremes;
  try {
    extremes = select_extremes({job.source_id, job.candidates}, scorer);
  } catch (const Error&) {
    return rejected(std::move(job), "unscoreable-candidate");
  }
  job.low_text = job.candidates[extremes.lowest];
  job.high_text = job.candidates[extremes.highest];
  job.low_log_sfreq = extremes.low_score.log_sfreq;
  job.high_log_sfreq = extremes.high_score.log_sfreq;
  if (job.low_text == job.high_text) return rejected(std::move(job), "degenerate-extremes");
  job.status = JobStatus::kGenerated;
  return job;
}

ParaphraseJob generate_job(std::string source_id, std::string sentence, CompletionProvider& provider,
                           const SentenceScorer& scorer) {
  std::string completion;
  try {
    completion = provider.complete({paraphrase_prompt(sentence)});
  } catch (const std::exception&) {
    ParaphraseJob job;
    job.source_id = std::move(source_id);
    job.original = std::move(sentence);
    return rejected(std::move(job), "provider-error");
  }
  return job_from_completion(std::move(source_id), std::move(sentence), completion, scorer);
}

nlohmann::json TfpdRecord::to_json() const {
  return {{"source_id", source_id}, {"high_text", high_text}, {"low_text", low_text}, {"ground_truth", ground_truth}};
}

PartitionStats length_stats(const std::vector<size_t>& lengths) {
  PartitionStats s;
  s.count = lengths.size();
  if (lengths.empty()) return s;
  size_t sum = 0;
  for (size_t n : lengths) sum += n;
  s.mean = static_cast<double>(sum) / static_cast<double>(lengths.size());
  s.max = *std::max_element(lengths.begin(), lengths.end());
  s.min = *std::min_element(lengths.begin(), lengths.end());
  return s;
}

nlohmann::json ExportStats::to_json() const {
  auto partition = [](const PartitionStats& p) {
    return nlohmann::json{{"count", p.count}, {"mean_length", p.mean}, {"max_length", p.max}, {"min_length", p.min}};
  };
  return {{"records", records}, {"high_frequency", partition(high)}, {"low_frequency", partition(low)}};
}

nlohmann::json Progress::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [status, n] : by_status) j[status] = n;
  j["jobs"] = jobs;
  j["judgments"] = judgments;
  return j;
}

TfpdPipeline::TfpdPipeline(PipelineConfig config) : config_(std::move(config)) {
  if (config_.annotators.empty()) throw Error(ErrorCode::kConfig, "at least one annotator is required");
  journal_ = std::make_unique<Journal>(config_.journal);
  size_t served = 0;
  for (const auto& event : journal_->replayed()) {
    apply(event);
    if (event.at("type") == "served") ++served;
  }
  rng_.seed(config_.seed + served);
}

bool TfpdPipeline::is_annotator(std::string_view id) const {
  return std::find(config_.annotators.begin(), config_.annotators.end(), id) != config_.annotators.end();
}

ParaphraseJob* TfpdPipeline::find(uint64_t job_id) {
  auto it = jobs_.find(job_id);
  return it == jobs_.end() ? nullptr : &it->second;
}

void TfpdPipeline::apply(const nlohmann::json& event) {
  const auto type = event.at("type").get<std::string>();
  if (type == "job") {
    auto job = job_from_json(event.at("job"));
    next_job_id_ = std::max(next_job_id_, job.job_id + 1);
    by_source_[job.source_id] = job.job_id;
    jobs_[job.job_id] = std::move(job);
  } else if (type == "served") {
    const auto job_id = event.at("job_id").get<uint64_t>();
    presentations_[event.at("token").get<std::string>()] = {job_id, event.at("annotator").get<std::string>()};
    if (auto* job = find(job_id); job && job->status == JobStatus::kGenerated) job->status = JobStatus::kInAnnotation;
  } else if (type == "judgment") {
    apply_judgment(event.at("job_id").get<uint64_t>(), event.at("annotator").get<std::string>(),
                   parse_verdict(event.at("verdict").get<std::string>()));
  } else {
    throw Error(ErrorCode::kFormat, "unknown journal event type '" + type + "'");
  }
}

void TfpdPipeline::apply_judgment(uint64_t job_id, const std::string& annotator, Verdict verdict) {
  auto* job = find(job_id);
  if (job == nullptr) throw Error(ErrorCode::kFormat, "journal judgment for unknown job " + std::to_string(job_id));
  job->verdicts[annotator] = verdict;
  ++judgments_;
  if (job->status == JobStatus::kGenerated) job->status = JobStatus::kInAnnotation;
  bool complete = true;
  bool unanimous = true;
  for (const auto& a : config_.annotators) {
    auto it = job->verdicts.find(a);
    if (it == job->verdicts.end()) {
      complete = false;
    } else if (it->second != Verdict::kSame) {
      unanimous = false;
    }
  }
  if (!complete) return;
  if (unanimous) {
    job->status = JobStatus::kAccepted;
  } else {
    job->status = JobStatus::kRejected;
    job->reject_reason = "not-unanimous";
  }
}

uint64_t TfpdPipeline::add_job(ParaphraseJob job) {
  std::lock_guard lock(mutex_);
  if (auto it = by_source_.find(job.source_id); it != by_source_.end()) return it->second;
  job.job_id = next_job_id_;
  job.verdicts.clear();
  journal_->append({{"type", "job"}, {"job", job_to_json(job)}});
  apply({{"type", "job"}, {"job", job_to_json(job)}});
  return job.job_id;
}

std::vector<uint64_t> TfpdPipeline::ingest(const std::vector<SourceRecord>& sources, CompletionProvider& provider,
                                           const SentenceScorer& scorer, size_t parallelism) {
  std::vector<uint64_t> ids(sources.size(), 0);
  std::vector<size_t> pending;
  std::vector<CompletionRequest> requests;
  {
    std::lock_guard lock(mutex_);
    for (size_t i = 0; i < sources.size(); ++i) {
      if (auto it = by_source_.find(sources[i].source_id); it != by_source_.end()) {
        ids[i] = it->second;
      } else {
        pending.push_back(i);
        requests.push_back({paraphrase_prompt(sources[i].text)});
      }
    }
  }
  auto results = complete_batch(provider, requests, parallelism);
  for (size_t k = 0; k < pending.size(); ++k) {
    const auto& src = sources[pending[k]];
    ParaphraseJob job;
    if (results[k].ok()) {
      job = job_from_completion(src.source_id, src.text, *results[k].text, scorer);
    } else {
      job.source_id = src.source_id;
      job.original = src.text;
      job = rejected(std::move(job), "provider-error");
    }
    job.ground_truth = src.ground_truth;
    ids[pending[k]] = add_job(std::move(job));
  }
  return ids;
}

std::optional<AnnotationItem> TfpdPipeline::next_item(const std::string& annotator_id) {
  std::lock_guard lock(mutex_);
  if (!is_annotator(annotator_id)) throw Error(ErrorCode::kAuth, "unknown annotator '" + annotator_id + "'");
  for (auto& [id, job] : jobs_) {
    if (job.finalized() || job.verdicts.contains(annotator_id)) continue;
    AnnotationItem item;
    item.job_id = id;
    item.roles = {SentenceRole::kOriginal, SentenceRole::kLow, SentenceRole::kHigh};
    for (size_t i = item.roles.size() - 1; i > 0; --i) {
      std::swap(item.roles[i], item.roles[rng_() % (i + 1)]);
    }
    for (size_t i = 0; i < 3; ++i) {
      switch (item.roles[i]) {
        case SentenceRole::kOriginal: item.sentences[i] = job.original; break;
        case SentenceRole::kLow: item.sentences[i] = job.low_text; break;
        case SentenceRole::kHigh: item.sentences[i] = job.high_text; break;
      }
    }
    item.token = hex64(rng_());
    nlohmann::json roles = nlohmann::json::array();
    for (auto r : item.roles) roles.push_back(static_cast<int>(r));
    nlohmann::json event = {
        {"type", "served"}, {"job_id", id}, {"annotator", annotator_id}, {"token", item.token}, {"roles", roles}};
    journal_->append(event);
    apply(event);
    return item;
  }
  return std::nullopt;
}

JobStatus TfpdPipeline::record_judgment(const Judgment& judgment) {
  std::lock_guard lock(mutex_);
  if (!is_annotator(judgment.annotator_id)) {
    throw Error(ErrorCode::kAuth, "unknown annotator '" + judgment.annotator_id + "'");
  }
  auto* job = find(judgment.job_id);
  if (job == nullptr) throw Error(ErrorCode::kNotFound, "no job " + std::to_string(judgment.job_id));
  if (job->finalized()) {
    throw Error(ErrorCode::kConflict, "job " + std::to_string(judgment.job_id) + " is already " +
                                          std::string(job_status_name(job->status)));
  }
  if (!judgment.token.empty()) {
    auto it = presentations_.find(judgment.token);
    if (it == presentations_.end() || it->second.job_id != judgment.job_id ||
        it->second.annotator != judgment.annotator_id) {
      throw Error(ErrorCode::kPrecondition, "presentation token does not match this job and annotator");
    }
  }
  nlohmann::json event = {{"type", "judgment"},
                          {"job_id", judgment.job_id},
                          {"annotator", judgment.annotator_id},
                          {"verdict", verdict_name(judgment.verdict)},
                          {"timestamp_ms", judgment.timestamp_ms != 0 ? judgment.timestamp_ms : now_ms()}};
  journal_->append(event);
  apply_judgment(judgment.job_id, judgment.annotator_id, judgment.verdict);
  return job->status;
}

std::optional<ParaphraseJob> TfpdPipeline::job(uint64_t job_id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::vector<ParaphraseJob> TfpdPipeline::jobs() const {
  std::lock_guard lock(mutex_);
  std::vector<ParaphraseJob> out;
  out.reserve(jobs_.size());
  for (const auto& [id, job] : jobs_) out.push_back(job);
  return out;
}

Progress TfpdPipeline::progress() const {
  std::lock_guard lock(mutex_);
  Progress p;
  for (auto s : {JobStatus::kGenerated, JobStatus::kInAnnotation, JobStatus::kAccepted, JobStatus::kRejected}) {
    p.by_status[std::string(job_status_name(s))] = 0;
  }
  for (const auto& [id, job] : jobs_) ++p.by_status[std::string(job_status_name(job.status))];
  p.jobs = jobs_.size();
  p.judgments = judgments_;
  return p;
}

std::vector<TfpdRecord> TfpdPipeline::records() const {
  std::vector<const ParaphraseJob*> accepted;
  std::lock_guard lock(mutex_);
  for (const auto& [id, job] : jobs_) {
    if (job.status == JobStatus::kAccepted) accepted.push_back(&job);
  }
  std::stable_sort(accepted.begin(), accepted.end(),
                   [](const auto* a, const auto* b) { return a->source_id < b->source_id; });
  std::vector<TfpdRecord> out;
  out.reserve(accepted.size());
  for (const auto* job : accepted) out.push_back({job->source_id, job->high_text, job->low_text, job->ground_truth});
  return out;
}

ExportStats TfpdPipeline::stats(const std::vector<TfpdRecord>& records) const {
  std::vector<size_t> high;
  std::vector<size_t> low;
  for (const auto& r : records) {
    high.push_back(tokenize(r.high_text, config_.tokenizer).size());
    low.push_back(tokenize(r.low_text, config_.tokenizer).size());
  }
  return {records.size(), length_stats(high), length_stats(low)};
}

ExportStats TfpdPipeline::export_tfpd(const std::filesystem::path& destination) const {
  const auto recs = records();
  std::string body;
  for (const auto& r : recs) {
    body += r.to_json().dump();
    body += '\n';
  }
  const auto st = stats(recs);
  auto stats_path = destination;
  stats_path += ".stats.json";
  write_file_atomic(destination, body);
  write_file_atomic(stats_path, st.to_json().dump(2) + "\n");
  return st;
}

}  // namespace tfl
