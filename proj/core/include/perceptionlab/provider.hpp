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

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "perceptionlab/domain.hpp"

namespace perceptionlab::provider {

inline constexpr const char* kApiKeyEnv = "PERCEPTIONLAB_API_KEY";
inline constexpr const char* kApiBaseEnv = "PERCEPTIONLAB_API_BASE";

struct CompletionRequest {
  std::string model_name;
  std::string system_text;
  std::string user_text;
  double temperature = 1.0;
  int max_tokens = 400;
  std::optional<std::uint64_t> seed;
  Uuid request_id;
};

enum class FinishReason { kStop, kLength, kFilter, kError };
std::string_view to_string(FinishReason r);

struct CompletionResult {
  std::string text;
  std::string model_version_reported;
  FinishReason finish_reason = FinishReason::kStop;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  std::int64_t latency_ms = 0;
};

/// Error raised by a provider call. code() is one of kRetryableProviderError,
/// kPermanentProviderError or kProviderTimeout.
class ProviderError : public Error {
 public:
  ProviderError(ErrorCode code, int status, std::string body_excerpt, std::string message);

  static ProviderError retryable(int status, std::string detail = {});
  static ProviderError permanent(int status, std::string body_excerpt);
  static ProviderError timeout(std::int64_t after_ms);

  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }
  bool retryable() const noexcept { return code() != ErrorCode::kPermanentProviderError; }

 private:
  int status_;
  std::string body_excerpt_;
};

/// Throws kInvalidValue unless temperature is in [0, 2] and max_tokens >= 1.
void validate_request(const CompletionRequest& request);

/// OpenAI chat-completions request body (messages with system and user roles).
Json chat_request_body(const CompletionRequest& request);

/// Request as recorded in logs and journals: the wire body plus request_id.
/// Contains no credential material.
std::string serialize_request(const CompletionRequest& request);

/// Maps an HTTP status and body onto a result or a ProviderError.
/// 2xx parses the chat-completions shape; 429 and 5xx are retryable; every
/// other status is permanent. A 2xx body that is not the expected shape is a
/// permanent error.
CompletionResult normalize_response(int status, std::string_view body, std::int64_t latency_ms);

class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
  /// Whether the provider honors the `seed` request field.
  virtual bool accepts_seed() const { return true; }
  virtual std::string_view name() const = 0;
};

struct Endpoint {
  enum class Auth { kBearer, kApiKeyHeader };

  std::string api_base;  // e.g. https://api.openai.com/v1
  Auth auth = Auth::kBearer;
  std::string azure_api_version = "2024-06-01";
  std::chrono::milliseconds timeout{60'000};

  /// Azure OpenAI hosts (*.openai.azure.com) get api-key auth and the
  /// deployment URL scheme; everything else is treated as OpenAI-compatible.
  static Endpoint from_api_base(std::string api_base);
  bool is_azure() const { return auth == Auth::kApiKeyHeader; }
};

struct Credentials {
  std::string api_key;

  /// Reads PERCEPTIONLAB_API_KEY; empty when unset.
  static Credentials from_environment();
};

using LogSink = std::function<void(std::string_view)>;

/// Blocking chat-completions client over HTTP(S). Immutable after
/// construction; one connection per call, so concurrent use is safe.
class OpenAICompatibleClient final : public CompletionProvider {
 public:
  OpenAICompatibleClient(Endpoint endpoint, Credentials credentials, LogSink log = {});

  CompletionResult complete(const CompletionRequest& request) override;
  std::string_view name() const override { return "openai_compatible"; }

 private:
  Endpoint endpoint_;
  Credentials credentials_;
  LogSink log_;
};

/// Free-function form of a single live call.
CompletionResult complete(const Endpoint& endpoint, const Credentials& credentials, const CompletionRequest& request);

/// Deterministic completion: the text is a pure function of
/// (model_name, system_text, user_text, temperature, seed).
CompletionResult mock_complete(const CompletionRequest& request);

/// In-process provider built on mock_complete. Records every request it sees
/// and can be scripted to fail matching requests a fixed number of times.
class MockProvider final : public CompletionProvider {
 public:
  using Matcher = std::function<bool(const CompletionRequest&)>;

  CompletionResult complete(const CompletionRequest& request) override;
  std::string_view name() const override { return "mock"; }

  /// The next `times` requests matching `match` fail with `status`
  /// (429/5xx fail retryably, anything else permanently).
  void script_failures(Matcher match, int times, int status = 429);

  /// serialize_request() of every call, in arrival order.
  std::vector<std::string> request_log() const;
  std::size_t calls() const;

 private:
  struct Script {
    Matcher match;
    int remaining;
    int status;
  };

  mutable std::mutex mu_;
  std::vector<std::string> log_;
  std::vector<Script> scripts_;
};

/// Dispatches by model name to per-model providers (one client per api_base).
class ProviderRouter final : public CompletionProvider {
 public:
  void add(std::string model_name, std::shared_ptr<CompletionProvider> provider);
  CompletionResult complete(const CompletionRequest& request) override;
  bool accepts_seed() const override;
  std::string_view name() const override { return "router"; }

 private:
  std::unordered_map<std::string, std::shared_ptr<CompletionProvider>> routes_;
};

}  // namespace perceptionlab::provider
