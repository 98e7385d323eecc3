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

// Independent reference implementations used only by tests. None of these
// call into the code path they check.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "vts/volume.hpp"

namespace vts::oracle {

inline Volume random_volume(Dims d, uint64_t seed, ValueDomain dom = ValueDomain::kNormalized, double lo = -1.0,
                            double hi = 1.0, Spacing s = {1.0, 1.0, 1.0}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Volume v(d, s, dom);
  for (float& x : v.data()) x = static_cast<float>(u(rng));
  return v;
}

// Trilinear value at output voxel (z, y, x) of a center-aligned resample,
// computed voxel by voxel from physical coordinates.
inline double trilinear_at(const Volume& v, Spacing target, int64_t z, int64_t y, int64_t x) {
  const double pos[3] = {(z + 0.5) * target.z, (y + 0.5) * target.y, (x + 0.5) * target.x};
  const double sp[3] = {v.spacing().z, v.spacing().y, v.spacing().x};
  const int64_t n[3] = {v.dims().z, v.dims().y, v.dims().x};
  int64_t lo[3], hi[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    double c = pos[a] / sp[a] - 0.5;
    if (c < 0) c = 0;
    if (c > n[a] - 1) c = static_cast<double>(n[a] - 1);
    lo[a] = static_cast<int64_t>(c);
    hi[a] = lo[a] + 1 < n[a] ? lo[a] + 1 : lo[a];
    f[a] = c - static_cast<double>(lo[a]);
  }
  double acc = 0;
  for (int bz = 0; bz < 2; ++bz)
    for (int by = 0; by < 2; ++by)
      for (int bx = 0; bx < 2; ++bx) {
        const double w = (bz ? f[0] : 1 - f[0]) * (by ? f[1] : 1 - f[1]) * (bx ? f[2] : 1 - f[2]);
        acc += w * v.at(bz ? hi[0] : lo[0], by ? hi[1] : lo[1], bx ? hi[2] : lo[2]);
      }
  return acc;
}

// Natural cubic spline through (i, y_i), i = 0..n-1, solved as one dense
// linear system for the 4(n-1) polynomial coefficients a + b u + c u^2 + d u^3
// of each interval. Returns a callable evaluator on [0, n-1].
struct DenseSpline {
  std::vector<double> a, b, c, d;

  explicit DenseSpline(const std::vector<double>& y) {
    const int n = static_cast<int>(y.size());
    const int m = n - 1;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4 * m, 4 * m);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(4 * m);
    int row = 0;
    for (int i = 0; i < m; ++i) {
      A(row, 4 * i) = 1;  // S_i(0) = y_i
      r(row++) = y[i];
      for (int k = 0; k < 4; ++k) A(row, 4 * i + k) = 1;  // S_i(1) = y_{i+1}
      r(row++) = y[i + 1];
    }
    for (int i = 0; i + 1 < m; ++i) {
      // S_i'(1) = S_{i+1}'(0)
      A(row, 4 * i + 1) = 1;
      A(row, 4 * i + 2) = 2;
      A(row, 4 * i + 3) = 3;
      A(row, 4 * (i + 1) + 1) = -1;
      ++row;
      // S_i''(1) = S_{i+1}''(0)
      A(row, 4 * i + 2) = 2;
      A(row, 4 * i + 3) = 6;
      A(row, 4 * (i + 1) + 2) = -2;
      ++row;
    }
    A(row++, 2) = 2;  // S_0''(0) = 0
    A(row, 4 * (m - 1) + 2) = 2;
    A(row, 4 * (m - 1) + 3) = 6;  // S_{m-1}''(1) = 0
    const Eigen::VectorXd s = A.fullPivLu().solve(r);
    for (int i = 0; i < m; ++i) {
      a.push_back(s(4 * i));
      b.push_back(s(4 * i + 1));
      c.push_back(s(4 * i + 2));
      d.push_back(s(4 * i + 3));
    }
  }

  double operator()(double t) const {
    int i = static_cast<int>(std::floor(t));
    if (i >= static_cast<int>(a.size())) i = static_cast<int>(a.size()) - 1;
    const double u = t - i;
    return a[i] + u * (b[i] + u * (c[i] + u * d[i]));
  }
};

}  // namespace vts::oracle
