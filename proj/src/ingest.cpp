#include "tfl/ingest.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tfl/error.hpp"
#include "tfl/records.hpp"

namespace tfl {
namespace {

struct Shard {
  TableBuilder builder;
  size_t skipped = 0;
};

void count_line(std::string_view line, CorpusFormat format, const TokenizerConfig& config, Shard& shard) {
  if (format == CorpusFormat::kLines) {
    shard.builder.add_tokens(tokenize(line, config));
    return;
  }
  if (line.find_first_not_of(" \t\r") == std::string_view::npos) return;
  auto record = nlohmann::json::parse(line, nullptr, false);
  if (record.is_discarded() || !record.is_object() || !record.contains("text") || !record["text"].is_string()) {
    ++shard.skipped;
    return;
  }
  shard.builder.add_tokens(tokenize(record["text"].get_ref<const std::string&>(), config));
}

class ShardedCounter {
 public:
  ShardedCounter(const TokenizerConfig& config, const BuildOptions& options)
      : config_(config), options_(options), shards_(std::max<size_t>(1, options.workers)) {}

  void process(std::span<const std::string> lines) {
    records_ += lines.size();
    const size_t n = shards_.size();
    if (n == 1 || lines.size() < n) {
      for (const auto& line : lines) count_line(line, options_.format, config_, shards_[0]);
      return;
    }
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (size_t w = 0; w < n; ++w) {
      const size_t begin = w * lines.size() / n;
      const size_t end = (w + 1) * lines.size() / n;
      threads.emplace_back([this, w, slice = lines.subspan(begin, end - begin)] {
        for (const auto& line : slice) count_line(line, options_.format, config_, shards_[w]);
      });
    }
    for (auto& t : threads) t.join();
  }

  BuildResult finish(std::string label) && {
    BuildResult result;
    result.records = records_;
    TableBuilder merged = std::move(shards_[0].builder);
    result.skipped = shards_[0].skipped;
    for (size_t w = 1; w < shards_.size(); ++w) {
      merged.merge(shards_[w].builder);
      result.skipped += shards_[w].skipped;
    }
    result.table = std::move(merged).finalize(std::move(label));
    return result;
  }

  size_t records() const noexcept { return records_; }

 private:
  TokenizerConfig config_;
  BuildOptions options_;
  std::vector<Shard> shards_;
  size_t records_ = 0;
};

[[noreturn]] void format_error(size_t line_no, const std::string& what) {
  throw Error(ErrorCode::kFormat, "line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

BuildResult build_table(std::istream& corpus, const TokenizerConfig& config, std::string label,
                        const BuildOptions& options) {
  ShardedCounter counter(config, options);
  const size_t batch = std::max<size_t>(1, options.batch_lines);
  std::vector<std::string> lines;
  lines.reserve(batch);
  std::string line;
  while (std::getline(corpus, line)) {
    lines.push_back(std::move(line));
    if (lines.size() == batch) {
      counter.process(lines);
      lines.clear();
    }
  }
  if (corpus.bad()) {
    throw Error(ErrorCode::kIo, "corpus read failed after " + std::to_string(counter.records() + lines.size()) +
                                    " records; partial table discarded");
  }
  counter.process(lines);
  return std::move(counter).finish(std::move(label));
}

BuildResult build_table(std::span<const std::string> documents, const TokenizerConfig& config, std::string label,
                        const BuildOptions& options) {
  ShardedCounter counter(config, options);
  const size_t batch = std::max<size_t>(1, options.batch_lines);
  for (size_t i = 0; i < documents.size(); i += batch) {
    counter.process(documents.subspan(i, std::min(batch, documents.size() - i)));
  }
  return std::move(counter).finish(std::move(label));
}

ZipfImportResult import_zipf_list(std::istream& in, const ZipfImportOptions& options) {
  if (!(options.virtual_total > 0.0) || !std::isfinite(options.virtual_total)) {
    throw Error(ErrorCode::kConfig, "virtual total must be positive and finite");
  }
  ZipfImportResult result;
  TableBuilder builder;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) format_error(line_no, "expected token<TAB>zipf");
    const std::string_view token(line.data(), tab);
    double zipf = 0.0;
    if (token.empty()) format_error(line_no, "empty token");
    if (!parse_double(std::string_view(line).substr(tab + 1), zipf) || !std::isfinite(zipf)) {
      format_error(line_no, "invalid zipf value");
    }
    ++result.records;
    auto normalized = tokenize(token, options.tokenizer);
    if (normalized.size() != 1) {
      ++result.skipped;
      continue;
    }
    builder.add(normalized.front(), std::pow(10.0, zipf - 9.0) * options.virtual_total);
  }
  if (in.bad()) throw Error(ErrorCode::kIo, "zipf list read failed at line " + std::to_string(line_no));

  auto listed = std::move(builder).finalize(options.label);
  const double listed_mass = listed.total();
  if (listed_mass > options.virtual_total * (1.0 + 1e-12)) {
    throw Error(ErrorCode::kFormat, "zipf list mass " + format_double(listed_mass) + " exceeds virtual total " +
                                        format_double(options.virtual_total));
  }
  TableBuilder with_rest;
  with_rest.merge(listed);
  if (listed_mass < options.virtual_total) with_rest.add(kUnlistedToken, options.virtual_total - listed_mass);
  result.table = std::move(with_rest).finalize(options.label);
  return result;
}

ZipfImportResult import_zipf_list(const std::filesystem::path& path, const ZipfImportOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open zipf list '" + path.string() + "'");
  return import_zipf_list(in, options);
}

std::string serialize_table(const FrequencyTable& table) {
  if (table.label().find_first_of("\n\r") != std::string::npos) {
    throw Error(ErrorCode::kFormat, "table label contains a line break");
  }
  std::string out;
  out += kTableHeaderVersion;
  out += ' ';
  out += format_double(table.total());
  out += ' ';
  out += table.label();
  out += '\n';
  for (const auto& [token, count] : table.sorted_entries()) {
    if (token.find_first_of("\t\n\r") != std::string::npos) {
      throw Error(ErrorCode::kFormat, "token contains a tab or line break");
    }
    out += token;
    out += '\t';
    out += format_double(count);
    out += '\n';
  }
  return out;
}

FrequencyTable parse_table(std::string_view data) {
  if (data.empty() || data.back() != '\n') {
    throw Error(ErrorCode::kFormat, "table is truncated (missing final newline)");
  }
  size_t pos = data.find('\n');
  if (pos >= data.size()) format_error(1, "missing header");
  const std::string_view header = data.substr(0, pos);
  const size_t sp1 = header.find(' ');
  if (header.substr(0, sp1) != kTableHeaderVersion) {
    throw Error(ErrorCode::kFormat, "unsupported table header '" + std::string(header.substr(0, sp1)) +
                                        "', expected " + std::string(kTableHeaderVersion));
  }
  if (sp1 == std::string_view::npos) format_error(1, "missing total in header");
  const std::string_view rest = header.substr(sp1 + 1);
  const size_t sp2 = rest.find(' ');
  double declared_total = 0.0;
  if (!parse_double(rest.substr(0, sp2), declared_total)) format_error(1, "invalid total in header");
  std::string label = sp2 == std::string_view::npos ? std::string() : std::string(rest.substr(sp2 + 1));

  TableBuilder builder;
  size_t line_no = 1;
  size_t seen = 0;
  ++pos;
  while (pos < data.size()) {
    ++line_no;
    const size_t eol = data.find('\n', pos);
    const std::string_view line = data.substr(pos, eol - pos);
    pos = eol + 1;
    const size_t tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) format_error(line_no, "expected token<TAB>count");
    double count = 0.0;
    if (!parse_double(line.substr(tab + 1), count) || !(count > 0.0) || !std::isfinite(count)) {
      format_error(line_no, "invalid count");
    }
    const size_t before = builder.size();
    builder.add(line.substr(0, tab), count);
    if (builder.size() == before) format_error(line_no, "duplicate token");
    ++seen;
  }
  auto table = std::move(builder).finalize(std::move(label));
  if (table.total() != declared_total) {
    throw Error(ErrorCode::kFormat, "table total mismatch: header says " + format_double(declared_total) +
                                        ", entries sum to " + format_double(table.total()) + " over " +
                                        std::to_string(seen) + " entries (truncated or corrupt)");
  }
  return table;
}

void save_table(const FrequencyTable& table, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_table(table));
}

FrequencyTable load_table(const std::filesystem::path& path) {
  return parse_table(read_file(path));
}

}  // namespace tfl
