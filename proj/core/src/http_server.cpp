// Copyright 2026 The PerceptionLab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "perceptionlab/http_server.hpp"

#include <httplib.h>

namespace perceptionlab::study {
namespace {

HttpResponse error_response(const Error& e) {
  return {http_status_for(e.code()), Json{{"error_code", to_string(e.code())}, {"message", e.what()}}};
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  Json doc = Json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kSchemaViolation, "request body is not valid JSON");
  if (!doc.is_object()) throw Error(ErrorCode::kSchemaViolation, "request body must be a JSON object");
  return doc;
}

Uuid session_path_id(const std::string& text) {
  auto id = Uuid::parse(text);
  if (!id) throw Error(ErrorCode::kUnknownSession, "unknown session " + text);
  return *id;
}

HttpResponse start_session(StudyService& service, const Json& doc) {
  if (!doc.contains("participant_id") || !doc["participant_id"].is_string()) {
    throw Error(ErrorCode::kMissingField, "participant_id is required", {{ErrorCode::kMissingField, "participant_id", "required"}});
  }
  std::optional<Uuid> campaign_id;
  if (doc.contains("campaign_id") && !doc["campaign_id"].is_null()) {
    campaign_id = doc["campaign_id"].is_string() ? Uuid::parse(doc["campaign_id"].get<std::string>()) : std::nullopt;
    if (!campaign_id) throw Error(ErrorCode::kInvalidValue, "campaign_id must be a UUID");
  }
  std::optional<Arm> arm;
  if (doc.contains("arm_override") && !doc["arm_override"].is_null()) {
    arm = doc["arm_override"].is_string() ? parse_arm(doc["arm_override"].get<std::string>()) : std::nullopt;
    if (!arm) throw Error(ErrorCode::kInvalidValue, "arm_override must be control or inoculation");
  }
  return {201, Json(service.start_session(doc["participant_id"].get<std::string>(), campaign_id, arm))};
}

}  // namespace

int http_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownSession:
    case ErrorCode::kUnknownParticipant:
      return 404;
    case ErrorCode::kPendingTrial:
    case ErrorCode::kDuplicateTrial:
    case ErrorCode::kNoPendingTrial:
      return 409;
    case ErrorCode::kStorageError:
      return 500;
    default:
      return 400;
  }
}

HttpResponse handle_request(StudyService& service, const std::string& method, const std::string& path,
                            const std::string& body) {
  static const std::string kSessions = "/v1/sessions/";
  try {
    if (path == "/v1/health") {
      if (method != "GET") return {405, Json{{"error_code", "MethodNotAllowed"}, {"message", method}}};
      return {200, Json{{"status", "ok"}}};
    }
    if (path == "/v1/participants" && method == "POST") {
      return {201, Json{{"participant_id", service.register_participant(parse_body(body))}}};
    }
    if (path == "/v1/sessions" && method == "POST") return start_session(service, parse_body(body));
    if (path.rfind(kSessions, 0) == 0) {
      const std::string rest = path.substr(kSessions.size());
      const auto slash = rest.find('/');
      if (slash != std::string::npos) {
        const std::string id = rest.substr(0, slash);
        const std::string action = rest.substr(slash + 1);
        if (action == "next" && method == "GET") {
          NextResult next = service.next_fragment(session_path_id(id));
          if (auto* p = std::get_if<TrialPresentation>(&next)) return {200, Json(*p)};
          return {200, Json(std::get<StudyComplete>(next))};
        }
        if (action == "judgments" && method == "POST") {
          const Uuid sid = session_path_id(id);
          return {201, Json(service.submit_judgment(sid, parse_body(body)))};
        }
      }
    }
    return {404, Json{{"error_code", "NotFound"}, {"message", method + " " + path}}};
  } catch (const Error& e) {
    return error_response(e);
  } catch (const Json::exception& e) {
    return {400, Json{{"error_code", to_string(ErrorCode::kSchemaViolation)}, {"message", e.what()}}};
  }
}

std::pair<std::string, int> parse_listen_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon + 1 == addr.size()) {
    throw Error(ErrorCode::kInvalidValue, "listen_addr must be host:port, got " + addr);
  }
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidValue, "listen_addr port is not a number: " + addr);
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::kOutOfRange, "listen_addr port out of range");
  std::string host = addr.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  return {host, port};
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(StudyService& service, std::optional<std::string> static_dir) : impl_(std::make_unique<Impl>()) {
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    HttpResponse out = handle_request(service, req.method, req.path, req.body);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  impl_->server.Get("/v1/.*", route);
  impl_->server.Post("/v1/.*", route);
  if (static_dir) impl_->server.set_mount_point("/", *static_dir);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kInvalidValue, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kInvalidValue, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

bool HttpServer::running() const { return impl_->server.is_running(); }

}  // namespace perceptionlab::study
