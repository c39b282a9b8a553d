#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "tfl/tfpd.hpp"

namespace tfl {

// HTTP API over a TfpdPipeline:
//   GET  /api/next?annotator=<id>   -> {"job_id", "sentences":[3], "token"} or {"done": true}
//   POST /api/judgments             <- {"job_id", "annotator", "verdict", "token"?}
//   GET  /api/progress              -> counts by status
//   GET  /api/export                -> accepted records as JSON lines
// Unknown annotator -> 401, unknown job -> 404, finalized job -> 409,
// malformed request -> 400. The sentence roles never leave the server.
class TfpdServer {
 public:
  explicit TfpdServer(TfpdPipeline& pipeline, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~TfpdServer();

  TfpdServer(const TfpdServer&) = delete;
  TfpdServer& operator=(const TfpdServer&) = delete;

  // Blocks until stop().
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and returns it; then call listen_after_bind().
  int bind_to_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tfl
