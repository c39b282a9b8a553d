#include "tfl/table.hpp"

#include <algorithm>

#include "tfl/error.hpp"

namespace tfl {

double FrequencyTable::count(std::string_view token) const {
  auto it = counts_.find(token);
  return it == counts_.end() ? 0.0 : it->second;
}

std::vector<std::pair<std::string, double>> FrequencyTable::sorted_entries() const {
  std::vector<std::pair<std::string, double>> out(counts_.begin(), counts_.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

bool operator==(const FrequencyTable& a, const FrequencyTable& b) {
  return a.total_ == b.total_ && a.label_ == b.label_ && a.counts_ == b.counts_;
}

void TableBuilder::add(std::string_view token, double count) {
  if (token.empty()) throw Error(ErrorCode::kConfig, "empty token");
  if (!(count >= 0.0)) throw Error(ErrorCode::kConfig, "negative or NaN count for token '" + std::string(token) + "'");
  auto it = counts_.find(token);
  if (it == counts_.end()) {
    counts_.emplace(std::string(token), count);
  } else {
    it->second += count;
  }
}

void TableBuilder::add_tokens(std::span<const std::string> tokens) {
  for (const auto& t : tokens) add(t);
}

void TableBuilder::merge(const TableBuilder& other) {
  for (const auto& [token, count] : other.counts_) add(token, count);
}

void TableBuilder::merge(const FrequencyTable& other) {
  for (const auto& [token, count] : other.entries()) add(token, count);
}

FrequencyTable TableBuilder::finalize(std::string label) && {
  std::erase_if(counts_, [](const auto& kv) { return kv.second == 0.0; });
  FrequencyTable table;
  table.counts_ = std::move(counts_);
  table.label_ = std::move(label);
  double total = 0.0;
  for (const auto& [token, count] : table.sorted_entries()) total += count;
  table.total_ = total;
  return table;
}

FrequencyTable merge_tables(const FrequencyTable& a, const FrequencyTable& b, std::string label) {
  TableBuilder builder;
  builder.merge(a);
  builder.merge(b);
  return std::move(builder).finalize(std::move(label));
}

}  // namespace tfl
