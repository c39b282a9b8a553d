#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tfl {

// Writes `content` to a sibling temp file, fsyncs it and renames it over
// `path`. On failure the temp file is removed and `path` is left untouched.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Line-delimited JSON. Blank lines are skipped; a malformed line throws a
// format error naming the file and line number.
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<nlohmann::json>& records);

// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);
bool parse_double(std::string_view text, double& out);

}  // namespace tfl
