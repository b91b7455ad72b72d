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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace perceptionlab {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::string_view bytes);

/// Lowercase hex SHA-256 of the UTF-8 bytes of `text` (64 characters).
std::string content_hash(std::string_view text);

std::string to_hex(const Sha256Digest& digest);

/// First eight digest bytes read big-endian. Used wherever a 64-bit seed has
/// to be a pure function of a canonical string.
std::uint64_t sha256_prefix_u64(std::string_view bytes);

}  // namespace perceptionlab
