#include "tfl/provider.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace tfl {

std::string prompt_hash(std::string_view prompt) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : prompt) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::string escape_fixture(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_fixture(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\' || i + 1 == text.size()) {
      out += text[i];
      continue;
    }
    switch (text[++i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case '\\': out += '\\'; break;
      default:
        out += '\\';
        out += text[i];
    }
  }
  return out;
}

MockProvider::MockProvider(std::unordered_map<std::string, std::string> by_hash) : by_hash_(std::move(by_hash)) {}

MockProvider MockProvider::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open fixture file '" + path.string() + "'");
  std::unordered_map<std::string, std::string> entries;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw Error(ErrorCode::kFormat, path.string() + ":" + std::to_string(line_no) + ": expected hash<TAB>completion");
    }
    entries[line.substr(0, tab)] = unescape_fixture(std::string_view(line).substr(tab + 1));
  }
  return MockProvider(std::move(entries));
}

void MockProvider::add(std::string_view prompt, std::string completion) {
  by_hash_[prompt_hash(prompt)] = std::move(completion);
}

std::string MockProvider::complete(const CompletionRequest& request) {
  const auto hash = prompt_hash(request.prompt);
  auto it = by_hash_.find(hash);
  if (it == by_hash_.end()) throw Error(ErrorCode::kMissingFixture, "no fixture for prompt hash " + hash);
  return it->second;
}

std::string MockProvider::serialize() const {
  std::vector<std::pair<std::string, std::string>> sorted(by_hash_.begin(), by_hash_.end());
  std::sort(sorted.begin(), sorted.end());
  std::string out;
  for (const auto& [hash, completion] : sorted) {
    out += hash;
    out += '\t';
    out += escape_fixture(completion);
    out += '\n';
  }
  return out;
}

HttpProvider::HttpProvider(HttpConfig config) : config_(std::move(config)) {
  std::string url = config_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::kConfig, "provider base URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? std::string() : url.substr(path_start);
  if (config_.max_retries < 0) throw Error(ErrorCode::kConfig, "max_retries must be >= 0");
}

std::string HttpProvider::complete(const CompletionRequest& request) {
  if (request.prompt.empty()) throw Error(ErrorCode::kConfig, "empty prompt");
  nlohmann::json body = {
      {"model", config_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
  };
  const std::string payload = body.dump();
  const std::string path = path_prefix_ + "/chat/completions";
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

  std::string last_failure;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);
    auto res = client.Post(path, headers, payload, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400 || res->status < 200 || res->status >= 300) {
      throw Error(ErrorCode::kProviderPermanent, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    const nlohmann::json::json_pointer content_ptr("/choices/0/message/content");
    if (parsed.is_discarded() || !parsed.contains(content_ptr) || !parsed[content_ptr].is_string()) {
      throw Error(ErrorCode::kProviderPermanent, "malformed chat-completions response");
    }
    auto text = parsed[content_ptr].get<std::string>();
    if (text.empty()) throw Error(ErrorCode::kProviderPermanent, "empty completion");
    return text;
  }
  throw Error(ErrorCode::kProviderExhausted, "gave up after " + std::to_string(config_.max_retries + 1) +
                                                 " attempts, last failure: " + last_failure);
}

std::unique_ptr<CompletionProvider> make_provider(const ProviderKind& kind) {
  if (const auto* mock = std::get_if<MockConfig>(&kind)) {
    return std::make_unique<MockProvider>(MockProvider::from_file(mock->fixtures));
  }
  auto http = std::get<HttpConfig>(kind);
  if (http.token.empty()) {
    if (const char* env = std::getenv(kProviderTokenEnv)) http.token = env;
  }
  return std::make_unique<HttpProvider>(std::move(http));
}

std::vector<CompletionResult> complete_batch(CompletionProvider& provider, const std::vector<CompletionRequest>& requests,
                                             size_t parallelism) {
  if (parallelism == 0) throw Error(ErrorCode::kConfig, "parallelism must be >= 1");
  std::vector<CompletionResult> results(requests.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < requests.size(); i = next++) {
      try {
        results[i].text = provider.complete(requests[i]);
      } catch (const Error& e) {
        results[i].error = e;
      } catch (const std::exception& e) {
        results[i].error = Error(ErrorCode::kProviderPermanent, e.what());
      }
    }
  };
  const size_t n = std::min(parallelism, requests.size());
  if (n <= 1) {
    worker();
    return results;
  }
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return results;
}

}  // namespace tfl
