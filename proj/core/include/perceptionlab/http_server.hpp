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

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "perceptionlab/study_service.hpp"

namespace perceptionlab::study {

struct HttpResponse {
  int status = 200;
  Json body;
};

/// Routes one API request without any socket involved. `path` excludes the
/// query string. Used by the server and directly by tests.
HttpResponse handle_request(StudyService& service, const std::string& method, const std::string& path,
                            const std::string& body);

/// HTTP status for an error raised by the service.
int http_status_for(ErrorCode code);

class HttpServer {
 public:
  HttpServer(StudyService& service, std::optional<std::string> static_dir = std::nullopt);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port". Port is required.
std::pair<std::string, int> parse_listen_addr(const std::string& addr);

}  // namespace perceptionlab::study
