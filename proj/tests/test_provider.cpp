#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "support.hpp"
#include "tfl/provider.hpp"
#include "tfl/records.hpp"

using namespace tfl;
using tfl::test::error_code_of;

TEST_CASE("prompt hash is 64-bit FNV-1a in hex") {
  // published FNV-1a 64 test vectors
  CHECK(prompt_hash("") == "cbf29ce484222325");
  CHECK(prompt_hash("a") == "af63dc4c8601ec8c");
  CHECK(prompt_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("fixture escaping round trips") {
  for (std::string s : {"plain", "two\nlines", "tab\there", "back\\slash", "cr\r\n", "", "\\n literal"}) {
    const auto e = escape_fixture(s);
    CHECK(e.find('\n') == std::string::npos);
    CHECK(e.find('\t') == std::string::npos);
    CHECK(unescape_fixture(e) == s);
  }
}

TEST_CASE("mock provider replays fixtures by prompt") {
  MockProvider mock;
  mock.add("hello", "world\nagain");
  CHECK(mock.complete({"hello"}) == "world\nagain");
  CHECK(error_code_of([&] { mock.complete({"other"}); }) == ErrorCode::kMissingFixture);

  tfl::test::TempDir dir;
  write_file_atomic(dir / "fx.tsv", "# comment\n" + mock.serialize());
  auto loaded = MockProvider::from_file(dir / "fx.tsv");
  CHECK(loaded.size() == 1);
  CHECK(loaded.complete({"hello"}) == "world\nagain");

  write_file_atomic(dir / "bad.tsv", "no tab here\n");
  CHECK(error_code_of([&] { MockProvider::from_file(dir / "bad.tsv"); }) == ErrorCode::kFormat);
  CHECK(error_code_of([&] { MockProvider::from_file(dir / "none.tsv"); }) == ErrorCode::kIo);
}

TEST_CASE("complete_batch keeps order and records failures") {
  MockProvider mock;
  for (int i = 0; i < 50; ++i) mock.add("p" + std::to_string(i), "c" + std::to_string(i));
  std::vector<CompletionRequest> reqs;
  for (int i = 0; i < 50; ++i) reqs.push_back({"p" + std::to_string(i)});
  reqs.push_back({"unknown"});
  auto results = complete_batch(mock, reqs, 4);
  REQUIRE(results.size() == 51);
  for (int i = 0; i < 50; ++i) CHECK(*results[i].text == "c" + std::to_string(i));
  CHECK_FALSE(results[50].ok());
  CHECK(results[50].error->code() == ErrorCode::kMissingFixture);
  CHECK(error_code_of([&] { complete_batch(mock, reqs, 0); }) == ErrorCode::kConfig);
}

namespace {

// Chat-completions stub that fails a configurable number of times first.
struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> calls{0};
  int failures_before_success = 0;
  int failure_status = 503;
  std::string last_auth;
  nlohmann::json last_body;

  StubServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++calls;
      last_auth = req.get_header_value("Authorization");
      last_body = nlohmann::json::parse(req.body);
      if (n <= failures_before_success) {
        res.status = failure_status;
        res.set_content("{}", "application/json");
        return;
      }
      const auto prompt = last_body["messages"][0]["content"].get<std::string>();
      nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo: " + prompt}}}}}}};
      res.set_content(reply.dump(), "application/json");
    });
    server.Post("/broken/chat/completions", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"choices\": []}", "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }

  HttpConfig config(const std::string& prefix = "/v1") const {
    HttpConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + prefix;
    c.model = "stub-model";
    c.token = "secret";
    c.max_retries = 2;
    c.initial_backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::seconds(5);
    return c;
  }
};

}  // namespace

TEST_CASE("http provider sends a chat request and reads the reply") {
  StubServer stub;
  HttpProvider p(stub.config());
  CHECK(p.complete({"hi there", 64, 0.5}) == "echo: hi there");
  CHECK(stub.last_auth == "Bearer secret");
  CHECK(stub.last_body["model"] == "stub-model");
  CHECK(stub.last_body["max_tokens"] == 64);
  CHECK(stub.last_body["temperature"] == 0.5);
  CHECK(stub.last_body["messages"][0]["role"] == "user");
}

TEST_CASE("http provider retries transient failures") {
  StubServer stub;
  stub.failures_before_success = 2;
  HttpProvider p(stub.config());
  CHECK(p.complete({"x"}) == "echo: x");
  CHECK(stub.calls == 3);
}

TEST_CASE("http provider gives up after the retry budget") {
  StubServer stub;
  stub.failures_before_success = 100;
  HttpProvider p(stub.config());
  CHECK(error_code_of([&] { p.complete({"x"}); }) == ErrorCode::kProviderExhausted);
  CHECK(stub.calls == 3);
}

TEST_CASE("http provider does not retry client errors") {
  StubServer stub;
  stub.failures_before_success = 100;
  stub.failure_status = 400;
  HttpProvider p(stub.config());
  CHECK(error_code_of([&] { p.complete({"x"}); }) == ErrorCode::kProviderPermanent);
  CHECK(stub.calls == 1);
}

TEST_CASE("http provider rejects malformed responses") {
  StubServer stub;
  HttpProvider p(stub.config("/broken"));
  CHECK(error_code_of([&] { p.complete({"x"}); }) == ErrorCode::kProviderPermanent);
}

TEST_CASE("unreachable hosts count as transient") {
  HttpConfig c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.max_retries = 1;
  c.initial_backoff = std::chrono::milliseconds(1);
  c.timeout = std::chrono::seconds(1);
  HttpProvider p(c);
  CHECK(error_code_of([&] { p.complete({"x"}); }) == ErrorCode::kProviderExhausted);
}

TEST_CASE("http provider configuration errors") {
  CHECK(error_code_of([] { HttpProvider p(HttpConfig{.base_url = "localhost:80"}); }) == ErrorCode::kConfig);
}
