#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

#include "tfl/table.hpp"
#include "tfl/tokenizer.hpp"

namespace tfl {

inline constexpr std::string_view kTableHeaderVersion = "tfl-table/1";
inline constexpr double kDefaultVirtualTotal = 1e9;
// Holds the probability mass a Zipf list does not enumerate. The tokenizer
// never emits '<', so this entry cannot collide with a real token.
inline constexpr std::string_view kUnlistedToken = "<unlisted>";

enum class CorpusFormat {
  kLines,      // one document per line
  kJsonLines,  // one JSON object per line, document in its "text" field
};

struct BuildOptions {
  CorpusFormat format = CorpusFormat::kLines;
  size_t workers = 1;
  size_t batch_lines = 8192;
};

struct BuildResult {
  FrequencyTable table;
  size_t records = 0;  // lines read, skipped ones included
  size_t skipped = 0;  // unreadable records
};

// Single pass over the stream. Memory grows with the vocabulary and one
// batch of lines, never with the corpus. With workers > 1 each worker keeps
// a partial table that is merged at the end; since counts are integers the
// result is bit-identical to the serial build.
BuildResult build_table(std::istream& corpus, const TokenizerConfig& config, std::string label,
                        const BuildOptions& options = {});
BuildResult build_table(std::span<const std::string> documents, const TokenizerConfig& config,
                        std::string label, const BuildOptions& options = {});

struct ZipfImportOptions {
  double virtual_total = kDefaultVirtualTotal;
  std::string label = "zipf-import";
  TokenizerConfig tokenizer;
};

struct ZipfImportResult {
  FrequencyTable table;
  size_t records = 0;
  size_t skipped = 0;  // entries that do not normalize to exactly one token
};

// Reads `token<TAB>zipf` lines. Each token gets the pseudo-count
// 10^(zipf-9) * virtual_total, and the remaining mass goes to kUnlistedToken
// so the table total equals the virtual total.
ZipfImportResult import_zipf_list(std::istream& in, const ZipfImportOptions& options = {});
ZipfImportResult import_zipf_list(const std::filesystem::path& path, const ZipfImportOptions& options = {});

// Text format: header `tfl-table/1 <total> <label>`, then `token<TAB>count`
// lines sorted by token bytes. Doubles use the shortest round-trip form.
std::string serialize_table(const FrequencyTable& table);
FrequencyTable parse_table(std::string_view data);

void save_table(const FrequencyTable& table, const std::filesystem::path& path);
FrequencyTable load_table(const std::filesystem::path& path);

}  // namespace tfl
