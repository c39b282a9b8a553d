#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "tfl/error.hpp"

namespace tfl {

struct CompletionRequest {
  std::string prompt;
  int max_output_tokens = 256;
  double temperature = 1.0;
};

// Language-model completion endpoint. Implementations must be safe to call
// from several threads at once.
class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  // Returns non-empty text or throws tfl::Error.
  virtual std::string complete(const CompletionRequest& request) = 0;
};

// FNV-1a 64 over the prompt bytes, as 16 lowercase hex digits.
std::string prompt_hash(std::string_view prompt);

// Canned completions keyed by prompt hash. Fixture file lines are
// `prompt-hash<TAB>completion`; in the completion, \n, \t and \\ are escapes.
class MockProvider final : public CompletionProvider {
 public:
  MockProvider() = default;
  explicit MockProvider(std::unordered_map<std::string, std::string> by_hash);

  static MockProvider from_file(const std::filesystem::path& path);

  void add(std::string_view prompt, std::string completion);
  std::string complete(const CompletionRequest& request) override;

  size_t size() const noexcept { return by_hash_.size(); }

  // Fixture file contents for the registered entries, sorted by hash.
  std::string serialize() const;

 private:
  std::unordered_map<std::string, std::string> by_hash_;
};

std::string escape_fixture(std::string_view text);
std::string unescape_fixture(std::string_view text);

struct HttpConfig {
  std::string base_url;  // e.g. http://localhost:8080/v1
  std::string model;
  std::string token;     // bearer token; empty disables the header
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{60};
};

inline constexpr const char* kProviderTokenEnv = "TFL_PROVIDER_TOKEN";

// Chat-completions client: POST <base>/chat/completions with a single user
// message, answer read from choices[0].message.content. 4xx is permanent;
// 5xx and transport failures are retried with exponential backoff.
class HttpProvider final : public CompletionProvider {
 public:
  explicit HttpProvider(HttpConfig config);
  std::string complete(const CompletionRequest& request) override;

  const HttpConfig& config() const noexcept { return config_; }

 private:
  HttpConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
};

struct MockConfig {
  std::filesystem::path fixtures;
};

using ProviderKind = std::variant<MockConfig, HttpConfig>;

// HttpConfig.token is filled from TFL_PROVIDER_TOKEN when left empty.
std::unique_ptr<CompletionProvider> make_provider(const ProviderKind& kind);

struct CompletionResult {
  std::optional<std::string> text;
  std::optional<Error> error;

  bool ok() const noexcept { return text.has_value(); }
};

// Results come back in request order. Each failure is captured in its own
// slot; the batch never aborts. At most `parallelism` requests are in flight.
std::vector<CompletionResult> complete_batch(CompletionProvider& provider, const std::vector<CompletionRequest>& requests,
                                             size_t parallelism);

}  // namespace tfl
