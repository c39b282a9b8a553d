#include "tfl/tfpd_server.hpp"

#include <httplib.h>
#include <json.hpp>

#include "tfl/error.hpp"

namespace tfl {
namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAuth: return 401;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kPrecondition:
    case ErrorCode::kConfig:
    case ErrorCode::kFormat: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view message) {
  send_json(res, status, {{"error", message}});
}

template <typename Handler>
auto guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_json(res, http_status(e.code()), {{"error", e.what()}, {"code", error_code_name(e.code())}});
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  };
}

}  // namespace

struct TfpdServer::Impl {
  explicit Impl(TfpdPipeline& p) : pipeline(p) {}
  TfpdPipeline& pipeline;
  httplib::Server server;
};

TfpdServer::TfpdServer(TfpdPipeline& pipeline, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(pipeline)) {
  auto& server = impl_->server;
  auto& pl = impl_->pipeline;

  server.Get("/api/next", guarded([&pl](const httplib::Request& req, httplib::Response& res) {
               if (!req.has_param("annotator")) return send_error(res, 401, "annotator parameter is required");
               auto item = pl.next_item(req.get_param_value("annotator"));
               if (!item) return send_json(res, 200, {{"done", true}});
               send_json(res, 200, {{"done", false},
                                    {"job_id", item->job_id},
                                    {"sentences", item->sentences},
                                    {"token", item->token}});
             }));

  server.Post("/api/judgments", guarded([&pl](const httplib::Request& req, httplib::Response& res) {
                auto body = nlohmann::json::parse(req.body, nullptr, false);
                if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
                Judgment j;
                j.job_id = body.at("job_id").get<uint64_t>();
                j.annotator_id = body.at("annotator").get<std::string>();
                j.verdict = parse_verdict(body.at("verdict").get<std::string>());
                if (body.contains("token")) j.token = body["token"].get<std::string>();
                const auto status = pl.record_judgment(j);
                send_json(res, 200, {{"job_id", j.job_id}, {"status", job_status_name(status)}});
              }));

  server.Get("/api/progress", guarded([&pl](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, pl.progress().to_json());
             }));

  server.Get("/api/export", guarded([&pl](const httplib::Request&, httplib::Response& res) {
               std::string body;
               for (const auto& r : pl.records()) {
                 body += r.to_json().dump();
                 body += '\n';
               }
               res.status = 200;
               res.set_content(body, "application/x-ndjson");
             }));

  if (static_dir) server.set_mount_point("/", static_dir->string());
}

TfpdServer::~TfpdServer() { stop(); }

bool TfpdServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int TfpdServer::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool TfpdServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void TfpdServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void TfpdServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace tfl
