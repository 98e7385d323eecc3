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

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vts/vvol.hpp"

namespace vts {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("vts_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Vvol, Int16RoundTripIsBitExact) {
  const auto dir = temp_dir("vvol_int16");
  Volume hu = oracle::random_volume({5, 6, 7}, 4, ValueDomain::kHU, -2048, 2048, {2.5, 0.75, 0.75});
  for (float& v : hu.data()) v = std::round(v);
  write_vvol(dir / "a.vvol", hu);
  const Volume back = read_vvol(dir / "a.vvol");
  EXPECT_EQ(back.dims(), hu.dims());
  EXPECT_EQ(back.spacing(), hu.spacing());
  EXPECT_EQ(back.domain(), ValueDomain::kHU);
  for (size_t i = 0; i < hu.data().size(); ++i) ASSERT_EQ(back.data()[i], hu.data()[i]);
  write_vvol(dir / "b.vvol", back);
  EXPECT_EQ(slurp(dir / "a.vvol"), slurp(dir / "b.vvol"));
  EXPECT_EQ(fs::file_size(dir / "a.vvol"), 5u * 6 * 7 * 2);
}

TEST(Vvol, Float32RoundTripIsBitExact) {
  const auto dir = temp_dir("vvol_f32");
  const Volume n = oracle::random_volume({3, 4, 5}, 8);
  write_vvol(dir / "n.vvol", n);
  const Volume back = read_vvol(dir / "n.vvol");
  EXPECT_EQ(back.domain(), ValueDomain::kNormalized);
  for (size_t i = 0; i < n.data().size(); ++i) ASSERT_EQ(back.data()[i], n.data()[i]);
  const auto side = read_vvol_sidecar(dir / "n.vvol");
  EXPECT_EQ(side["dtype"], "float32");
  EXPECT_EQ(side["dims"], nlohmann::json({3, 4, 5}));
}

TEST(Vvol, Int16RoundsHalfToEven) {
  const auto dir = temp_dir("vvol_round");
  Volume hu({1, 1, 4}, {1, 1, 1}, ValueDomain::kHU, std::vector<float>{0.5f, 1.5f, -0.5f, 2.5f});
  write_vvol(dir / "r.vvol", hu);
  const Volume back = read_vvol(dir / "r.vvol");
  EXPECT_EQ(back.data()[0], 0.0f);
  EXPECT_EQ(back.data()[1], 2.0f);
  EXPECT_EQ(back.data()[2], 0.0f);
  EXPECT_EQ(back.data()[3], 2.0f);
}

TEST(Vvol, MissingOrBrokenSidecarIsDataError) {
  const auto dir = temp_dir("vvol_err");
  const Volume n = oracle::random_volume({2, 2, 2}, 1);
  write_vvol(dir / "x.vvol", n);
  nlohmann::json side = read_vvol_sidecar(dir / "x.vvol");
  side.erase("spacing_mm");
  std::ofstream(sidecar_path(dir / "x.vvol")) << side.dump();
  EXPECT_THROW(read_vvol(dir / "x.vvol"), DataError);
  fs::remove(sidecar_path(dir / "x.vvol"));
  EXPECT_THROW(read_vvol(dir / "x.vvol"), DataError);
  write_vvol(dir / "y.vvol", n);
  fs::resize_file(dir / "y.vvol", 5);
  EXPECT_THROW(read_vvol(dir / "y.vvol"), DataError);
}

}  // namespace
}  // namespace vts
