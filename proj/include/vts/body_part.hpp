// Copyright 2026 The VTS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <string>
#include <string_view>

#include "vts/error.hpp"

namespace vts {

enum class BodyPart : int { kHead = 0, kChest = 1, kAbdomen = 2, kLeg = 3 };

inline constexpr std::array<BodyPart, 4> kAllBodyParts = {BodyPart::kHead, BodyPart::kChest, BodyPart::kAbdomen,
                                                         BodyPart::kLeg};

inline std::string to_string(BodyPart p) {
  switch (p) {
    case BodyPart::kHead: return "head";
    case BodyPart::kChest: return "chest";
    case BodyPart::kAbdomen: return "abdomen";
    case BodyPart::kLeg: return "leg";
  }
  return "?";
}

inline BodyPart body_part_from_string(std::string_view s) {
  for (BodyPart p : kAllBodyParts)
    if (s == to_string(p)) return p;
  if (s == "legs") return BodyPart::kLeg;
  throw DataError("unknown body_part '" + std::string(s) + "'");
}

}  // namespace vts
