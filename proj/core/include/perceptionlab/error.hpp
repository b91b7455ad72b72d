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

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace perceptionlab {

enum class ErrorCode {
  // Validation of domain documents.
  kMissingField,
  kOutOfRange,
  kEmptyList,
  kInvalidValue,
  kSchemaViolation,
  // Judgment intake and the study loop.
  kScoreOutOfRange,
  kUnknownFragment,
  kDuplicateTrial,
  kNoConsent,
  kNoPendingTrial,
  kPendingTrial,
  kUnknownSession,
  kUnknownParticipant,
  kInvalidDemographic,
  // Storage.
  kDuplicateId,
  kReferentialViolation,
  kUnknownField,
  kStorageError,
  // Stimulus engine and providers.
  kUnboundPlaceholder,
  kRetryableProviderError,
  kPermanentProviderError,
  kProviderTimeout,
  // Analytics.
  kDanglingJudgment,
  kEmptyClass,
  kTooFewParticipants,
  kInsufficientData,
  kDegenerateRanks,
  kNoFakeTrials,
  kNoRealTrials,
  kMissingArm,
};

std::string_view to_string(ErrorCode code);

/// One field-level problem found while validating a document.
struct Violation {
  ErrorCode code;
  std::string field;
  std::string message;
};

/// The single exception type thrown by the library. `code()` is stable and is
/// what the HTTP and CLI layers report; `violations()` lists every field-level
/// problem when a whole document was validated, and is empty otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message);
  Error(ErrorCode code, std::string message, std::vector<Violation> violations);

  ErrorCode code() const noexcept { return code_; }
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  ErrorCode code_;
  std::vector<Violation> violations_;
};

}  // namespace perceptionlab
