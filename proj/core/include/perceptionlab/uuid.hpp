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
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace perceptionlab {

/// RFC 4122 textual UUID. Random ids are version 4; name-derived ids use the
/// first 16 bytes of SHA-256(name) stamped as version 8 so that deterministic
/// ids (tasks, fragments of a campaign, simulated cohorts) are stable across runs.
class Uuid {
 public:
  Uuid() = default;

  static Uuid random();
  static Uuid from_name(std::string_view name);
  static std::optional<Uuid> parse(std::string_view text);

  std::string to_string() const;
  bool is_nil() const;

  auto operator<=>(const Uuid&) const = default;

 private:
  std::array<std::uint8_t, 16> bytes_{};
};

}  // namespace perceptionlab
