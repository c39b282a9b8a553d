#include "tfl/journal.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "tfl/error.hpp"
#include "tfl/records.hpp"

namespace tfl {
namespace {

[[noreturn]] void throw_errno(const std::string& what, const std::filesystem::path& path) {
  throw Error(ErrorCode::kIo, what + " '" + path.string() + "': " + std::strerror(errno));
}

}  // namespace

Journal::Journal(std::filesystem::path path) : path_(std::move(path)) {
  std::string data;
  if (std::filesystem::exists(path_)) data = read_file(path_);

  size_t pos = 0;
  size_t line_no = 0;
  size_t good_end = 0;
  while (pos < data.size()) {
    ++line_no;
    const size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) {
      torn_tail_ = true;  // incomplete final append
      break;
    }
    std::string_view line(data.data() + pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) {
      good_end = pos;
      continue;
    }
    auto event = nlohmann::json::parse(line, nullptr, false);
    if (event.is_discarded() || !event.is_object()) {
      if (pos == data.size()) {
        torn_tail_ = true;
        break;
      }
      throw Error(ErrorCode::kFormat, path_.string() + ":" + std::to_string(line_no) + ": corrupt journal event");
    }
    replayed_.push_back(std::move(event));
    good_end = pos;
  }

  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw_errno("cannot open journal", path_);
  if (torn_tail_ && ::ftruncate(fd_, static_cast<off_t>(good_end)) != 0) {
    throw_errno("cannot truncate torn journal tail", path_);
  }
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

void Journal::append(const nlohmann::json& event) {
  std::string line = event.dump();
  line += '\n';
  const char* p = line.data();
  size_t left = line.size();
  while (left > 0) {
    ssize_t n = ::write(fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("journal append failed", path_);
    }
    p += n;
    left -= static_cast<size_t>(n);
  }
  if (::fdatasync(fd_) != 0) throw_errno("journal sync failed", path_);
}

}  // namespace tfl
