#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tfl/error.hpp"

namespace tfl::test {

// Removed with its contents on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tfl-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Small deterministic generator for property tests.
class Gen {
 public:
  explicit Gen(uint64_t seed) : engine_(seed) {}

  size_t below(size_t n) { return static_cast<size_t>(engine_() % n); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }
  bool coin() { return (engine_() & 1) != 0; }

  std::string word(size_t max_len = 6) {
    static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz";
    std::string w;
    const size_t n = 1 + below(max_len);
    for (size_t i = 0; i < n; ++i) w += kAlphabet[below(26)];
    return w;
  }

  std::vector<std::string> words(size_t count, size_t max_len = 6) {
    std::vector<std::string> out;
    for (size_t i = 0; i < count; ++i) out.push_back(word(max_len));
    return out;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

template <typename F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  throw std::logic_error("expected tfl::Error");
}

inline std::string join(const std::vector<std::string>& words, const std::string& sep = " ") {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += sep;
    out += words[i];
  }
  return out;
}

}  // namespace tfl::test
