#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tfl/frequency.hpp"

namespace tfl {

// Meaning-equivalent texts, asserted upstream.
struct ParaphraseSet {
  std::string id;
  std::vector<std::string> candidates;

  void validate() const;
};

struct Selection {
  size_t index = 0;
  SentenceScore score;
};

struct Extremes {
  size_t lowest = 0;
  size_t highest = 0;
  SentenceScore low_score;
  SentenceScore high_score;
};

// Index of the largest value; ties go to the lowest index. NaN is rejected.
size_t argmax_index(std::span<const double> values);
// {argmin, argmax}, lowest index on ties; when every value is equal the pair
// is {0, 1}. Needs at least two values.
std::pair<size_t, size_t> extreme_indices(std::span<const double> values);

// Candidate with the highest sentence frequency.
Selection select_max(const ParaphraseSet& set, const SentenceScorer& scorer);
// Lowest- and highest-frequency candidates.
Extremes select_extremes(const ParaphraseSet& set, const SentenceScorer& scorer);

struct TrainingInstance {
  std::string id;
  std::string input_text;
  nlohmann::json payload;  // carried through untouched
};

enum class OrderingMode {
  kAscendingFrequency,   // curriculum: rare first
  kDescendingFrequency,  // frequent first
  kExternalKey,          // caller-supplied difficulty, ascending
};

std::string_view ordering_mode_name(OrderingMode mode);
OrderingMode parse_ordering_mode(std::string_view name);

// Stable sort of the instance ids by their key. Descending sorts by the
// negated key, so ties keep input order in every mode and, for distinct
// keys, descending is exactly the reverse of ascending. The order does not
// depend on the epoch.
std::vector<std::string> order_curriculum(std::span<const TrainingInstance> instances,
                                          const std::unordered_map<std::string, double>& scores, OrderingMode mode);

}  // namespace tfl
