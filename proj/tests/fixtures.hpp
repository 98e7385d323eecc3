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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vts/degrader.hpp"
#include "vts/nets.hpp"
#include "vts/phantom.hpp"

namespace vts::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vts_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline Volume phantom_volume(Dims dims, uint64_t seed, BodyPart part = BodyPart::kChest) {
  PhantomSpec s;
  s.dims = dims;
  s.seed = seed;
  s.body_part = part;
  return normalize_hu(generate_phantom(s));
}

inline Volume random_volume(Dims dims, uint64_t seed) {
  Volume v(dims, {1, 1, 1}, ValueDomain::kNormalized);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (float& x : v.data()) x = u(rng);
  return v;
}

// Replaces every convolution weight with N(0, 1/fan_in) draws so that the
// network's output depends visibly on its whole receptive field.
template <class T>
void activate(ImageNet<T>& net, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& [name, v] : net.params()) {
    const auto s = v.shape();
    if (s.d < 2 && name.find("final") == std::string::npos) continue;
    if (name.size() < 7 || name.substr(name.size() - 7) != ".weight") continue;
    nn::init_normal(v, std::sqrt(1.0 / static_cast<double>(s.c * s.d * s.h * s.w)), rng);
  }
  net.set_training(false);
}

}  // namespace vts::testing
