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

#include "perceptionlab/provider.hpp"

#include <httplib.h>

#include <cstdlib>
#include <sstream>

#include "perceptionlab/hash.hpp"

namespace perceptionlab::provider {
namespace {

constexpr std::size_t kExcerptBytes = 240;

std::string scrub(std::string text, const std::string& secret) {
  if (secret.empty()) return text;
  for (std::size_t pos = text.find(secret); pos != std::string::npos; pos = text.find(secret, pos)) {
    text.replace(pos, secret.size(), "***");
    pos += 3;
  }
  return text;
}

std::string excerpt(std::string_view body) {
  return std::string(body.substr(0, std::min(body.size(), kExcerptBytes)));
}

FinishReason parse_finish_reason(const Json& v) {
  if (!v.is_string()) return FinishReason::kError;
  const auto s = v.get<std::string>();
  if (s == "stop") return FinishReason::kStop;
  if (s == "length") return FinishReason::kLength;
  if (s == "content_filter" || s == "filter") return FinishReason::kFilter;
  return FinishReason::kError;
}

struct ParsedUrl {
  std::string scheme_host_port;  // what httplib::Client accepts
  std::string path;              // base path without trailing slash
};

ParsedUrl split_url(const std::string& url) {
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw Error(ErrorCode::kInvalidValue, "api_base is not a URL: " + url);
  const auto path_start = url.find('/', sep + 3);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::kStop: return "stop";
    case FinishReason::kLength: return "length";
    case FinishReason::kFilter: return "filter";
    case FinishReason::kError: return "error";
  }
  return "error";
}

ProviderError::ProviderError(ErrorCode code, int status, std::string body_excerpt, std::string message)
    : Error(code, std::move(message)), status_(status), body_excerpt_(std::move(body_excerpt)) {}

ProviderError ProviderError::retryable(int status, std::string detail) {
  std::string msg = "RetryableError(" + std::to_string(status) + ")";
  if (!detail.empty()) msg += ": " + detail;
  return ProviderError(ErrorCode::kRetryableProviderError, status, {}, std::move(msg));
}

ProviderError ProviderError::permanent(int status, std::string body_excerpt) {
  std::string msg = "PermanentError(" + std::to_string(status) + ")";
  if (!body_excerpt.empty()) msg += ": " + body_excerpt;
  return ProviderError(ErrorCode::kPermanentProviderError, status, std::move(body_excerpt), std::move(msg));
}

ProviderError ProviderError::timeout(std::int64_t after_ms) {
  return ProviderError(ErrorCode::kProviderTimeout, 0, {}, "Timeout(after " + std::to_string(after_ms) + " ms)");
}

void validate_request(const CompletionRequest& r) {
  if (r.model_name.empty()) throw Error(ErrorCode::kInvalidValue, "model_name must be nonempty");
  if (!(r.temperature >= kMinTemperature && r.temperature <= kMaxTemperature)) {
    throw Error(ErrorCode::kOutOfRange, "temperature must lie in [0, 2]");
  }
  if (r.max_tokens < 1) throw Error(ErrorCode::kOutOfRange, "max_tokens must be >= 1");
}

Json chat_request_body(const CompletionRequest& r) {
  Json body = {{"model", r.model_name},
               {"messages", Json::array({{{"role", "system"}, {"content", r.system_text}},
                                         {{"role", "user"}, {"content", r.user_text}}})},
               {"temperature", r.temperature},
               {"max_tokens", r.max_tokens},
               {"stream", false}};
  if (r.seed) body["seed"] = *r.seed;
  return body;
}

std::string serialize_request(const CompletionRequest& r) {
  Json j = chat_request_body(r);
  j["request_id"] = r.request_id.to_string();
  return j.dump();
}

CompletionResult normalize_response(int status, std::string_view body, std::int64_t latency_ms) {
  if (status == 429 || (status >= 500 && status <= 599)) throw ProviderError::retryable(status);
  if (status < 200 || status > 299) throw ProviderError::permanent(status, excerpt(body));

  Json doc = Json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw ProviderError::permanent(status, excerpt(body));
  auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty() || !(*choices)[0].is_object()) {
    throw ProviderError::permanent(status, excerpt(body));
  }
  const Json& choice = (*choices)[0];
  CompletionResult out;
  out.latency_ms = latency_ms;
  if (auto msg = choice.find("message"); msg != choice.end() && msg->is_object()) {
    if (auto content = msg->find("content"); content != msg->end() && content->is_string()) {
      out.text = content->get<std::string>();
    }
  }
  out.finish_reason = parse_finish_reason(choice.contains("finish_reason") ? choice["finish_reason"] : Json());
  if (out.finish_reason == FinishReason::kStop && out.text.empty()) out.finish_reason = FinishReason::kError;
  if (auto model = doc.find("model"); model != doc.end() && model->is_string()) {
    out.model_version_reported = model->get<std::string>();
  }
  if (auto usage = doc.find("usage"); usage != doc.end() && usage->is_object()) {
    out.prompt_tokens = usage->value("prompt_tokens", 0);
    out.completion_tokens = usage->value("completion_tokens", 0);
  }
  return out;
}

Endpoint Endpoint::from_api_base(std::string api_base) {
  Endpoint e;
  e.api_base = std::move(api_base);
  const auto sep = e.api_base.find("://");
  std::string host = sep == std::string::npos ? e.api_base : e.api_base.substr(sep + 3);
  host = host.substr(0, host.find_first_of(":/"));
  if (ends_with(host, ".openai.azure.com")) e.auth = Auth::kApiKeyHeader;
  return e;
}

Credentials Credentials::from_environment() {
  Credentials c;
  if (const char* key = std::getenv(kApiKeyEnv)) c.api_key = key;
  return c;
}

OpenAICompatibleClient::OpenAICompatibleClient(Endpoint endpoint, Credentials credentials, LogSink log)
    : endpoint_(std::move(endpoint)), credentials_(std::move(credentials)), log_(std::move(log)) {
  if (!is_valid_url(endpoint_.api_base)) {
    throw Error(ErrorCode::kInvalidValue, "api_base is not a valid URL: " + endpoint_.api_base);
  }
}

CompletionResult OpenAICompatibleClient::complete(const CompletionRequest& request) {
  validate_request(request);
  const ParsedUrl url = split_url(endpoint_.api_base);
  httplib::Client client(url.scheme_host_port);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), static_cast<time_t>(micros.count()));
  client.set_read_timeout(seconds.count(), static_cast<time_t>(micros.count()));
  client.set_write_timeout(seconds.count(), static_cast<time_t>(micros.count()));

  httplib::Headers headers = {{"X-Request-Id", request.request_id.to_string()}};
  std::string path;
  Json body = chat_request_body(request);
  if (endpoint_.is_azure()) {
    headers.emplace("api-key", credentials_.api_key);
    path = url.path + "/openai/deployments/" + request.model_name +
           "/chat/completions?api-version=" + endpoint_.azure_api_version;
    body.erase("model");
  } else {
    if (!credentials_.api_key.empty()) headers.emplace("Authorization", "Bearer " + credentials_.api_key);
    path = url.path + "/chat/completions";
  }

  if (log_) log_("POST " + path + " " + serialize_request(request));
  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(path, headers, body.dump(), "application/json");
  const auto elapsed =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();

  if (!res) {
    const auto err = res.error();
    if (log_) log_("transport error: " + httplib::to_string(err));
    if (err == httplib::Error::ConnectionTimeout ||
        (err == httplib::Error::Read && elapsed >= endpoint_.timeout.count() * 9 / 10)) {
      throw ProviderError::timeout(elapsed);
    }
    throw ProviderError::retryable(0, httplib::to_string(err));
  }
  if (log_) log_("HTTP " + std::to_string(res->status) + " in " + std::to_string(elapsed) + " ms");
  try {
    return normalize_response(res->status, res->body, elapsed);
  } catch (const ProviderError& e) {
    // The excerpt comes from the remote side; never let it echo the key.
    throw ProviderError(e.code(), e.status(), scrub(e.body_excerpt(), credentials_.api_key),
                        scrub(e.what(), credentials_.api_key));
  }
}

CompletionResult complete(const Endpoint& endpoint, const Credentials& credentials, const CompletionRequest& request) {
  OpenAICompatibleClient client(endpoint, credentials);
  return client.complete(request);
}

// ---- mock ----

namespace {

constexpr std::array<std::string_view, 8> kLeads = {
    "Officials confirmed on Tuesday that the regional council will review the proposal next month.",
    "A new report suggests commuters in the capital spend more time in traffic than a decade ago.",
    "Researchers announced a breakthrough that could change how cities store renewable energy.",
    "Residents gathered downtown after rumours spread about the closure of the central library.",
    "The ministry denied claims that the new tax would apply to small family businesses.",
    "Local farmers warn that the dry spring may push vegetable prices higher this summer.",
    "An anonymous post claiming the river is unsafe for swimming was shared thousands of times.",
    "The football club unveiled plans for a larger stadium, citing record ticket demand.",
};

}  // namespace

CompletionResult mock_complete(const CompletionRequest& r) {
  validate_request(r);
  std::ostringstream key;
  key << r.model_name << '\x1f' << r.system_text << '\x1f' << r.user_text << '\x1f';
  key.precision(17);
  key << r.temperature << '\x1f' << (r.seed ? std::to_string(*r.seed) : std::string("-"));
  const std::string digest = content_hash(key.str());
  const std::uint64_t pick = sha256_prefix_u64(digest);

  CompletionResult out;
  out.text = std::string(kLeads[pick % kLeads.size()]) + " [mock " + digest.substr(0, 16) + "]";
  out.model_version_reported = r.model_name + "-mock";
  out.finish_reason = FinishReason::kStop;
  out.prompt_tokens = static_cast<int>((r.system_text.size() + r.user_text.size()) / 4 + 1);
  out.completion_tokens = std::min(r.max_tokens, static_cast<int>(out.text.size() / 4 + 1));
  out.latency_ms = 0;
  return out;
}

CompletionResult MockProvider::complete(const CompletionRequest& request) {
  {
    std::lock_guard<std::mutex> lock(mu_);
    log_.push_back(serialize_request(request));
    for (auto& s : scripts_) {
      if (s.remaining > 0 && s.match(request)) {
        --s.remaining;
        if (s.status == 429 || s.status >= 500) throw ProviderError::retryable(s.status, "scripted");
        throw ProviderError::permanent(s.status, "scripted failure");
      }
    }
  }
  return mock_complete(request);
}

void MockProvider::script_failures(Matcher match, int times, int status) {
  std::lock_guard<std::mutex> lock(mu_);
  scripts_.push_back({std::move(match), times, status});
}

std::vector<std::string> MockProvider::request_log() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

std::size_t MockProvider::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_.size();
}

void ProviderRouter::add(std::string model_name, std::shared_ptr<CompletionProvider> provider) {
  routes_[std::move(model_name)] = std::move(provider);
}

CompletionResult ProviderRouter::complete(const CompletionRequest& request) {
  auto it = routes_.find(request.model_name);
  if (it == routes_.end()) throw ProviderError::permanent(0, "no provider configured for model " + request.model_name);
  return it->second->complete(request);
}

bool ProviderRouter::accepts_seed() const {
  for (const auto& [name, p] : routes_) {
    if (!p->accepts_seed()) return false;
  }
  return true;
}

}  // namespace perceptionlab::provider
