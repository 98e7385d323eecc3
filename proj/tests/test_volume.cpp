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

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vts/volume.hpp"

namespace vts {
namespace {

Volume constant_volume(Dims d, float v, Spacing s = {1, 1, 1}, ValueDomain dom = ValueDomain::kNormalized) {
  return Volume(d, s, dom, v);
}

TEST(Volume, RejectsBadGeometry) {
  EXPECT_THROW(Volume({0, 1, 1}, {1, 1, 1}, ValueDomain::kHU), DataError);
  EXPECT_THROW(Volume({1, 1, 1}, {1, 0, 1}, ValueDomain::kHU), DataError);
  EXPECT_THROW(Volume({2, 2, 2}, {1, 1, 1}, ValueDomain::kHU, std::vector<float>(7)), DataError);
}

TEST(NormalizeHu, MapsAndClips) {
  Volume v({1, 1, 4}, {1, 1, 1}, ValueDomain::kHU, std::vector<float>{2048.f, 0.f, -4096.f, 1024.f});
  const Volume n = normalize_hu(v);
  EXPECT_EQ(n.domain(), ValueDomain::kNormalized);
  EXPECT_EQ(n.data()[0], 1.0f);
  EXPECT_EQ(n.data()[1], 0.0f);
  EXPECT_EQ(n.data()[2], -1.0f);
  EXPECT_EQ(n.data()[3], 0.5f);
  EXPECT_NO_THROW(n.validate_range());
}

TEST(NormalizeHu, RejectsNonFinite) {
  Volume v({1, 1, 2}, {1, 1, 1}, ValueDomain::kHU, std::vector<float>{0.f, NAN});
  EXPECT_THROW(normalize_hu(v), DataError);
  Volume w({1, 1, 1}, {1, 1, 1}, ValueDomain::kNormalized);
  EXPECT_THROW(normalize_hu(w), UsageError);
}

TEST(NormalizeHu, MonotoneAndIdempotentOnClipped) {
  std::vector<float> vals;
  for (int i = -3000; i <= 3000; i += 37) vals.push_back(static_cast<float>(i));
  Volume v({1, 1, static_cast<int64_t>(vals.size())}, {1, 1, 1}, ValueDomain::kHU, vals);
  const Volume n = normalize_hu(v);
  for (size_t i = 1; i < vals.size(); ++i) EXPECT_LE(n.data()[i - 1], n.data()[i]);
  // Re-normalizing the HU image of clipped data lands on the same values.
  const Volume again = normalize_hu(denormalize(n));
  for (size_t i = 0; i < vals.size(); ++i) EXPECT_EQ(again.data()[i], n.data()[i]);
}

TEST(Denormalize, InverseMapAndErrors) {
  Volume n({1, 1, 2}, {1, 1, 1}, ValueDomain::kNormalized, std::vector<float>{1.0f, 0.0f});
  const Volume h = denormalize(n);
  EXPECT_EQ(h.data()[0], 2048.0f);
  EXPECT_EQ(h.data()[1], 0.0f);
  Volume bad({1, 1, 1}, {1, 1, 1}, ValueDomain::kNormalized, std::vector<float>{1.01f});
  EXPECT_THROW(denormalize(bad), DataError);
}

TEST(Denormalize, RoundTripWithinTolerance) {
  const Volume hu = oracle::random_volume({8, 9, 10}, 3, ValueDomain::kHU, -2048, 2048);
  const Volume back = denormalize(normalize_hu(hu));
  double max_err = 0;
  for (size_t i = 0; i < hu.data().size(); ++i)
    max_err = std::max(max_err, std::abs(double(back.data()[i]) - hu.data()[i]));
  EXPECT_LT(max_err, 1e-3);
}

TEST(ResampleIsotropic, IdentityIsBitExact) {
  const Volume v = oracle::random_volume({7, 5, 6}, 11);
  const Volume r = resample_isotropic(v, 1.0);
  ASSERT_EQ(r.dims(), v.dims());
  for (size_t i = 0; i < v.data().size(); ++i) EXPECT_EQ(r.data()[i], v.data()[i]);
}

TEST(ResampleIsotropic, ConstantStaysConstant) {
  const Volume v = constant_volume({10, 7, 9}, 0.25f, {2.0, 0.7, 1.3});
  const Volume r = resample_isotropic(v, 1.0);
  EXPECT_EQ(r.dims(), (Dims{20, 5, 12}));
  for (float x : r.data()) EXPECT_NEAR(x, 0.25f, 1e-7);
}

TEST(ResampleIsotropic, MatchesDirectTrilinearOracle) {
  const Volume v = oracle::random_volume({10, 6, 5}, 5, ValueDomain::kNormalized, -1, 1, {2.0, 1.0, 1.0});
  const Volume r = resample_isotropic(v, 1.0);
  ASSERT_EQ(r.dims(), (Dims{20, 6, 5}));
  double worst = 0;
  for (int64_t z = 0; z < 20; ++z)
    for (int64_t y = 0; y < 6; ++y)
      for (int64_t x = 0; x < 5; ++x)
        worst = std::max(worst, std::abs(r.at(z, y, x) - oracle::trilinear_at(v, {1, 1, 1}, z, y, x)));
  EXPECT_LT(worst, 1e-5);
}

TEST(ResampleIsotropic, OutputWithinInputRangeAndRejectsBadTarget) {
  const Volume v = oracle::random_volume({6, 7, 8}, 8, ValueDomain::kNormalized, -0.3, 0.6, {3.0, 0.8, 1.7});
  const Volume r = resample_isotropic(v, 0.9);
  const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
  for (float x : r.data()) {
    EXPECT_GE(x, *lo);
    EXPECT_LE(x, *hi);
  }
  EXPECT_THROW(resample_isotropic(v, 0.0), UsageError);
  EXPECT_THROW(resample_isotropic(v, -1.0), UsageError);
}

TEST(GaussianZ, ZeroSigmaIsIdentityAndConstantPreserved) {
  const Volume v = oracle::random_volume({9, 3, 4}, 1);
  const Volume g0 = gaussian_z(v, 0.0);
  for (size_t i = 0; i < v.data().size(); ++i) EXPECT_EQ(g0.data()[i], v.data()[i]);
  const Volume c = constant_volume({9, 3, 4}, -0.4f);
  for (double s : {0.5, 1.0, 3.2}) {
    const Volume g = gaussian_z(c, s);
    for (float x : g.data()) EXPECT_NEAR(x, -0.4f, 1e-7);
  }
  EXPECT_THROW(gaussian_z(v, -0.1), UsageError);
}

TEST(GaussianZ, ImpulseMatchesExplicitKernel) {
  Volume v = constant_volume({21, 2, 2}, 0.0f);
  for (int64_t y = 0; y < 2; ++y)
    for (int64_t x = 0; x < 2; ++x) v.at(10, y, x) = 1.0f;
  const Volume g = gaussian_z(v, 1.0);
  // sigma 1: radius 3, weights exp(-k^2/2) / sum.
  double w[7], sum = 0;
  for (int k = -3; k <= 3; ++k) sum += (w[k + 3] = std::exp(-0.5 * k * k));
  for (int64_t z = 0; z < 21; ++z) {
    const double expect = (z >= 7 && z <= 13) ? w[z - 7] / sum : 0.0;
    EXPECT_NEAR(g.at(z, 1, 1), expect, 1e-6) << "z=" << z;
  }
}

TEST(GaussianZ, PreservesMeanWithMirrorBoundary) {
  const Volume v = oracle::random_volume({12, 6, 6}, 21);
  for (double s : {0.7, 1.6, 3.2, 6.0}) {
    const Volume g = gaussian_z(v, s);
    double a = 0, b = 0;
    for (size_t i = 0; i < v.data().size(); ++i) {
      a += v.data()[i];
      b += g.data()[i];
    }
    EXPECT_NEAR(a / v.data().size(), b / v.data().size(), 1e-4) << "sigma " << s;
  }
}

TEST(SplineZ, FactorOneIsIdentity) {
  const Volume v = oracle::random_volume({5, 2, 3}, 2);
  const Volume u = spline_z_upsample(v, 1);
  for (size_t i = 0; i < v.data().size(); ++i) EXPECT_EQ(u.data()[i], v.data()[i]);
}

TEST(SplineZ, ReproducesLinearRamp) {
  Volume v({9, 2, 2}, {4, 1, 1}, ValueDomain::kNormalized);
  for (int64_t z = 0; z < 9; ++z)
    for (int64_t i = 0; i < 4; ++i) v.data()[z * 4 + i] = -0.5f + 0.125f * z + 0.0625f * i;
  const Volume u = spline_z_upsample(v, 4);
  ASSERT_EQ(u.dims().z, 33);
  EXPECT_DOUBLE_EQ(u.spacing().z, 1.0);
  for (int64_t z = 0; z < 33; ++z)
    for (int64_t i = 0; i < 4; ++i)
      EXPECT_NEAR(u.data()[z * 4 + i], -0.5 + 0.125 * (z / 4.0) + 0.0625 * i, 1e-9);
}

TEST(SplineZ, SineMatchesDenseSplineOracle) {
  std::vector<double> knots;
  Volume v({8, 1, 1}, {8, 1, 1}, ValueDomain::kNormalized);
  for (int z = 0; z < 8; ++z) {
    knots.push_back(static_cast<float>(std::sin(0.9 * z)));
    v.data()[z] = static_cast<float>(knots.back());
  }
  const oracle::DenseSpline ref(knots);
  const Volume u = spline_z_upsample(v, 8);
  ASSERT_EQ(u.dims().z, 57);
  for (int64_t k = 0; k < 57; ++k) EXPECT_NEAR(u.data()[k], ref(k / 8.0), 1e-6) << "k=" << k;
}

TEST(SplineZ, KnotsPreservedAndErrors) {
  const Volume v = oracle::random_volume({6, 3, 3}, 9);
  const Volume u = spline_z_upsample(v, 3);
  EXPECT_EQ(u.dims().z, 16);
  const Volume back = subsample_z(u, 3);
  ASSERT_EQ(back.dims(), v.dims());
  for (size_t i = 0; i < v.data().size(); ++i) EXPECT_EQ(back.data()[i], v.data()[i]);
  EXPECT_DOUBLE_EQ(back.spacing().z, v.spacing().z);
  EXPECT_THROW(spline_z_upsample(oracle::random_volume({1, 2, 2}, 1), 2), UsageError);
  EXPECT_THROW(spline_z_upsample(v, 0), UsageError);
}

TEST(SplineZ, ExtendedGridContinuesLinearly) {
  Volume v({3, 1, 1}, {4, 1, 1}, ValueDomain::kNormalized, std::vector<float>{0.0f, 0.5f, 1.0f});
  const Volume u = spline_z_upsample(v, 4, 12);
  ASSERT_EQ(u.dims().z, 12);
  for (int64_t k = 0; k < 12; ++k) EXPECT_NEAR(u.data()[k], 0.125 * k, 1e-7);
}

TEST(SplineZ, ResampleToNonIntegerSpacing) {
  Volume v({5, 1, 1}, {3.0, 1, 1}, ValueDomain::kNormalized, std::vector<float>{0, 0.3f, 0.6f, 0.9f, 1.0f});
  const Volume r = spline_z_resample(v, 1.0);
  EXPECT_EQ(r.dims().z, 13);
  EXPECT_EQ(r.data()[0], 0.0f);
  EXPECT_NEAR(r.data()[12], 1.0f, 1e-6);
}

TEST(SubsampleZ, IndexArithmetic) {
  Volume v({9, 1, 1}, {1, 1, 1}, ValueDomain::kNormalized);
  for (int z = 0; z < 9; ++z) v.data()[z] = static_cast<float>(z) / 10;
  const Volume s = subsample_z(v, 4);
  ASSERT_EQ(s.dims().z, 3);
  EXPECT_EQ(s.data()[0], 0.0f);
  EXPECT_EQ(s.data()[1], 0.4f);
  EXPECT_EQ(s.data()[2], 0.8f);
  EXPECT_DOUBLE_EQ(s.spacing().z, 4.0);
  const Volume same = subsample_z(v, 1);
  for (size_t i = 0; i < 9; ++i) EXPECT_EQ(same.data()[i], v.data()[i]);
  const Volume up = spline_z_upsample(s, 4);
  for (int z : {0, 4, 8}) EXPECT_EQ(up.data()[z], v.data()[z]);
}

}  // namespace
}  // namespace vts
