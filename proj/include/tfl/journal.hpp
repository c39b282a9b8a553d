#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

namespace tfl {

// Append-only event log, one JSON object per line. append() returns only
// after the line is on stable storage (fdatasync), so an acknowledged event
// survives a crash.
//
// Opening replays the log. A torn final line (no newline, or unparsable
// without a newline) is the signature of a crash mid-append: it is dropped
// and the file is truncated back to the last complete event. Damage anywhere
// else is reported as a format error.
class Journal {
 public:
  explicit Journal(std::filesystem::path path);
  ~Journal();

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  const std::vector<nlohmann::json>& replayed() const noexcept { return replayed_; }
  bool recovered_torn_tail() const noexcept { return torn_tail_; }

  void append(const nlohmann::json& event);

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::vector<nlohmann::json> replayed_;
  bool torn_tail_ = false;
};

}  // namespace tfl
