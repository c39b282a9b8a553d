#include "tfl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfl/error.hpp"

namespace tfl {
namespace {

void reject_nan(std::span<const double> values) {
  for (size_t i = 0; i < values.size(); ++i) {
    if (std::isnan(values[i])) throw Error(ErrorCode::kDomain, "NaN score at index " + std::to_string(i));
  }
}

std::vector<SentenceScore> score_all(const ParaphraseSet& set, const SentenceScorer& scorer) {
  set.validate();
  std::vector<SentenceScore> scores;
  scores.reserve(set.candidates.size());
  for (size_t i = 0; i < set.candidates.size(); ++i) {
    try {
      scores.push_back(scorer(set.candidates[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::kUnscoreable, "set '" + set.id + "' candidate " + std::to_string(i) + " ('" +
                                               set.candidates[i] + "') is not scoreable: " + e.what());
    }
  }
  return scores;
}

std::vector<double> log_values(const std::vector<SentenceScore>& scores) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(s.log_sfreq);
  return out;
}

}  // namespace

void ParaphraseSet::validate() const {
  if (candidates.empty()) throw Error(ErrorCode::kPrecondition, "paraphrase set '" + id + "' has no candidates");
  for (size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].empty()) {
      throw Error(ErrorCode::kPrecondition, "paraphrase set '" + id + "' candidate " + std::to_string(i) + " is empty");
    }
  }
}

size_t argmax_index(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kPrecondition, "argmax of an empty list");
  reject_nan(values);
  size_t best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::pair<size_t, size_t> extreme_indices(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorCode::kPrecondition, "extremes need at least two candidates");
  reject_nan(values);
  size_t lo = 0;
  size_t hi = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[lo]) lo = i;
    if (values[i] > values[hi]) hi = i;
  }
  if (lo == hi) return {0, 1};  // all equal
  return {lo, hi};
}

Selection select_max(const ParaphraseSet& set, const SentenceScorer& scorer) {
  auto scores = score_all(set, scorer);
  const size_t best = argmax_index(log_values(scores));
  return {best, std::move(scores[best])};
}

Extremes select_extremes(const ParaphraseSet& set, const SentenceScorer& scorer) {
  if (set.candidates.size() < 2) {
    throw Error(ErrorCode::kPrecondition, "paraphrase set '" + set.id + "' needs at least two candidates");
  }
  auto scores = score_all(set, scorer);
  const auto [lo, hi] = extreme_indices(log_values(scores));
  return {lo, hi, scores[lo], scores[hi]};
}

std::string_view ordering_mode_name(OrderingMode mode) {
  switch (mode) {
    case OrderingMode::kAscendingFrequency: return "ascending";
    case OrderingMode::kDescendingFrequency: return "descending";
    case OrderingMode::kExternalKey: return "external";
  }
  return "?";
}

OrderingMode parse_ordering_mode(std::string_view name) {
  if (name == "ascending") return OrderingMode::kAscendingFrequency;
  if (name == "descending") return OrderingMode::kDescendingFrequency;
  if (name == "external") return OrderingMode::kExternalKey;
  throw Error(ErrorCode::kConfig, "unknown ordering mode '" + std::string(name) + "'");
}

std::vector<std::string> order_curriculum(std::span<const TrainingInstance> instances,
                                          const std::unordered_map<std::string, double>& scores, OrderingMode mode) {
  std::vector<double> keys;
  keys.reserve(instances.size());
  for (const auto& inst : instances) {
    auto it = scores.find(inst.id);
    if (it == scores.end()) {
      throw Error(ErrorCode::kMissingScore, "no " + std::string(mode == OrderingMode::kExternalKey ? "key" : "score") +
                                                " for instance '" + inst.id + "'");
    }
    if (std::isnan(it->second)) throw Error(ErrorCode::kDomain, "NaN score for instance '" + inst.id + "'");
    keys.push_back(mode == OrderingMode::kDescendingFrequency ? -it->second : it->second);
  }
  std::vector<size_t> order(instances.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&keys](size_t a, size_t b) { return keys[a] < keys[b]; });
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (size_t i : order) ids.push_back(instances[i].id);
  return ids;
}

}  // namespace tfl
