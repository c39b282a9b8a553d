#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tfl {

struct StringHash {
  using is_transparent = void;
  size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

using CountMap = std::unordered_map<std::string, double, StringHash, std::equal_to<>>;

// Token -> occurrence statistics over one corpus. Immutable once built; a
// table is only obtainable through TableBuilder::finalize() or load_table(),
// so every instance is finalized and safe to share across threads.
//
// Counts are doubles. Corpus-built tables hold integer values (exact up to
// 2^53); tables imported from Zipf lists hold fractional pseudo-counts.
class FrequencyTable {
 public:
  FrequencyTable() = default;

  double count(std::string_view token) const;
  double total() const noexcept { return total_; }
  const std::string& label() const noexcept { return label_; }
  size_t size() const noexcept { return counts_.size(); }
  bool empty() const noexcept { return counts_.empty(); }
  const CountMap& entries() const noexcept { return counts_; }

  // Entries ordered by token bytes; the canonical order for output and summation.
  std::vector<std::pair<std::string, double>> sorted_entries() const;

  friend bool operator==(const FrequencyTable& a, const FrequencyTable& b);

 private:
  friend class TableBuilder;

  CountMap counts_;
  double total_ = 0.0;
  std::string label_;
};

class TableBuilder {
 public:
  void add(std::string_view token, double count = 1.0);
  void add_tokens(std::span<const std::string> tokens);
  void merge(const TableBuilder& other);
  void merge(const FrequencyTable& other);

  size_t size() const noexcept { return counts_.size(); }

  // Consumes the builder. Zero-count entries are dropped; the total is summed
  // in canonical token order so it is reproducible bit-for-bit.
  FrequencyTable finalize(std::string label) &&;

 private:
  CountMap counts_;
};

// Entry-wise count addition.
FrequencyTable merge_tables(const FrequencyTable& a, const FrequencyTable& b, std::string label);

}  // namespace tfl
