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

#include <iosfwd>
#include <string>
#include <vector>

#include "perceptionlab/domain.hpp"

namespace perceptionlab::cli {

enum ExitCode : int { kOk = 0, kValidationError = 1, kRuntimeError = 2 };

/// Runs one command line (args excludes the program name). Writes exactly one
/// JSON document to `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Exit code for an error raised by a module operation.
int exit_code_for(ErrorCode code);

/// Serializes an error as {error_code, message, violations}.
Json error_document(const Error& error);

}  // namespace perceptionlab::cli
