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

#include "perceptionlab/error.hpp"

#include <utility>

namespace perceptionlab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kEmptyList: return "EmptyList";
    case ErrorCode::kInvalidValue: return "InvalidValue";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::kUnknownFragment: return "UnknownFragment";
    case ErrorCode::kDuplicateTrial: return "DuplicateTrial";
    case ErrorCode::kNoConsent: return "NoConsent";
    case ErrorCode::kNoPendingTrial: return "NoPendingTrial";
    case ErrorCode::kPendingTrial: return "PendingTrial";
    case ErrorCode::kUnknownSession: return "UnknownSession";
    case ErrorCode::kUnknownParticipant: return "UnknownParticipant";
    case ErrorCode::kInvalidDemographic: return "InvalidDemographic";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kReferentialViolation: return "ReferentialViolation";
    case ErrorCode::kUnknownField: return "UnknownField";
    case ErrorCode::kStorageError: return "StorageError";
    case ErrorCode::kUnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::kRetryableProviderError: return "RetryableError";
    case ErrorCode::kPermanentProviderError: return "PermanentError";
    case ErrorCode::kProviderTimeout: return "Timeout";
    case ErrorCode::kDanglingJudgment: return "DanglingJudgment";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kTooFewParticipants: return "TooFewParticipants";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kDegenerateRanks: return "DegenerateRanks";
    case ErrorCode::kNoFakeTrials: return "NoFakeTrials";
    case ErrorCode::kNoRealTrials: return "NoRealTrials";
    case ErrorCode::kMissingArm: return "MissingArm";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string message)
    : std::runtime_error(std::move(message)), code_(code) {}

Error::Error(ErrorCode code, std::string message, std::vector<Violation> violations)
    : std::runtime_error(std::move(message)), code_(code), violations_(std::move(violations)) {}

}  // namespace perceptionlab
