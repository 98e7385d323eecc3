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

// Volume carrier and the scalar-grid primitives everything else builds on:
// HU normalization, trilinear resampling, z-axis Gaussian smoothing, and
// natural cubic spline interpolation along z.
//
// Axis order is (z, y, x) everywhere; data is stored z-major, x fastest.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vts/error.hpp"

namespace vts {

enum class ValueDomain { kHU, kNormalized };

inline std::string to_string(ValueDomain d) { return d == ValueDomain::kHU ? "HU" : "NORMALIZED"; }

inline ValueDomain value_domain_from_string(std::string_view s) {
  if (s == "HU") return ValueDomain::kHU;
  if (s == "NORMALIZED") return ValueDomain::kNormalized;
  throw DataError("unknown value_domain '" + std::string(s) + "'");
}

struct Dims {
  int64_t z = 1, y = 1, x = 1;
  int64_t count() const { return z * y * x; }
  bool operator==(const Dims&) const = default;
};

struct Spacing {
  double z = 1.0, y = 1.0, x = 1.0;
  bool operator==(const Spacing&) const = default;
};

inline constexpr float kHuClip = 2048.0f;

class Volume {
 public:
  Volume() = default;

  Volume(Dims dims, Spacing spacing, ValueDomain domain, float fill = 0.0f)
      : dims_(dims), spacing_(spacing), domain_(domain) {
    check_geometry();
    data_.assign(static_cast<size_t>(dims.count()), fill);
  }

  Volume(Dims dims, Spacing spacing, ValueDomain domain, std::vector<float> data)
      : dims_(dims), spacing_(spacing), domain_(domain), data_(std::move(data)) {
    check_geometry();
    if (static_cast<int64_t>(data_.size()) != dims.count())
      throw DataError("volume data size " + std::to_string(data_.size()) + " does not match dims");
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  ValueDomain domain() const { return domain_; }
  void set_spacing(Spacing s) {
    spacing_ = s;
    check_geometry();
  }
  void set_domain(ValueDomain d) { domain_ = d; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }

  int64_t index(int64_t z, int64_t y, int64_t x) const { return (z * dims_.y + y) * dims_.x + x; }
  float& at(int64_t z, int64_t y, int64_t x) { return data_[static_cast<size_t>(index(z, y, x))]; }
  float at(int64_t z, int64_t y, int64_t x) const { return data_[static_cast<size_t>(index(z, y, x))]; }

  // Throws DataError if values violate the range implied by the domain tag.
  void validate_range(double tol = 0.0) const {
    const double lim = domain_ == ValueDomain::kHU ? kHuClip : 1.0;
    for (float v : data_) {
      if (!std::isfinite(v)) throw DataError("volume contains non-finite values");
      if (std::abs(v) > lim + tol)
        throw DataError("value " + std::to_string(v) + " outside " + to_string(domain_) + " range");
    }
  }

 private:
  void check_geometry() const {
    if (dims_.z < 1 || dims_.y < 1 || dims_.x < 1) throw DataError("volume dims must all be >= 1");
    if (!(spacing_.z > 0 && spacing_.y > 0 && spacing_.x > 0))
      throw DataError("volume spacing must be positive");
  }

  Dims dims_{};
  Spacing spacing_{};
  ValueDomain domain_ = ValueDomain::kNormalized;
  std::vector<float> data_ = std::vector<float>(1, 0.0f);
};

// ---------------------------------------------------------------------------
// Intensity mapping

inline Volume normalize_hu(const Volume& vol) {
  if (vol.domain() != ValueDomain::kHU) throw UsageError("normalize_hu expects an HU volume");
  Volume out(vol.dims(), vol.spacing(), ValueDomain::kNormalized);
  auto src = vol.data();
  auto dst = out.data();
  for (size_t i = 0; i < src.size(); ++i) {
    if (!std::isfinite(src[i])) throw DataError("normalize_hu: non-finite voxel at index " + std::to_string(i));
    dst[i] = std::clamp(src[i], -kHuClip, kHuClip) / kHuClip;
  }
  return out;
}

inline Volume denormalize(const Volume& vol) {
  if (vol.domain() != ValueDomain::kNormalized) throw UsageError("denormalize expects a normalized volume");
  Volume out(vol.dims(), vol.spacing(), ValueDomain::kHU);
  auto src = vol.data();
  auto dst = out.data();
  for (size_t i = 0; i < src.size(); ++i) {
    if (!(std::abs(src[i]) <= 1.0 + 1e-6))
      throw DataError("denormalize: value " + std::to_string(src[i]) + " outside [-1, 1]");
    dst[i] = std::clamp(src[i], -1.0f, 1.0f) * kHuClip;
  }
  return out;
}

// Clamp in place to [lo, hi].
inline void clip_inplace(Volume& vol, float lo, float hi) {
  for (float& v : vol.data()) v = std::clamp(v, lo, hi);
}

// ---------------------------------------------------------------------------
// Trilinear resampling

namespace detail {

struct LerpTap {
  int64_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

// Center-aligned mapping of `out_n` samples at spacing `out_s` onto `in_n`
// samples at spacing `in_s`, clamped to the input extent.
inline std::vector<LerpTap> lerp_taps(int64_t in_n, double in_s, int64_t out_n, double out_s) {
  std::vector<LerpTap> taps(static_cast<size_t>(out_n));
  for (int64_t j = 0; j < out_n; ++j) {
    double u = (static_cast<double>(j) + 0.5) * out_s / in_s - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(in_n - 1));
    const auto i0 = static_cast<int64_t>(std::floor(u));
    const int64_t i1 = std::min(i0 + 1, in_n - 1);
    taps[static_cast<size_t>(j)] = {i0, i1, u - static_cast<double>(i0)};
  }
  return taps;
}

inline int64_t resampled_extent(int64_t n, double in_s, double out_s) {
  return std::max<int64_t>(1, std::llround(static_cast<double>(n) * in_s / out_s));
}

}  // namespace detail

// Resample to the given per-axis spacing; output extent per axis is
// round(n * in_spacing / target), at least 1.
inline Volume resample_trilinear(const Volume& vol, Spacing target) {
  if (!(target.z > 0 && target.y > 0 && target.x > 0)) throw UsageError("resample target spacing must be > 0");
  const Dims in = vol.dims();
  const Spacing s = vol.spacing();
  const Dims od{detail::resampled_extent(in.z, s.z, target.z), detail::resampled_extent(in.y, s.y, target.y),
                detail::resampled_extent(in.x, s.x, target.x)};
  const auto tz = detail::lerp_taps(in.z, s.z, od.z, target.z);
  const auto ty = detail::lerp_taps(in.y, s.y, od.y, target.y);
  const auto tx = detail::lerp_taps(in.x, s.x, od.x, target.x);
  Volume out(od, target, vol.domain());
  for (int64_t z = 0; z < od.z; ++z) {
    const auto& a = tz[static_cast<size_t>(z)];
    for (int64_t y = 0; y < od.y; ++y) {
      const auto& b = ty[static_cast<size_t>(y)];
      for (int64_t x = 0; x < od.x; ++x) {
        const auto& c = tx[static_cast<size_t>(x)];
        auto plane = [&](int64_t zi) {
          const double r0 = (1.0 - c.w1) * vol.at(zi, b.i0, c.i0) + c.w1 * vol.at(zi, b.i0, c.i1);
          const double r1 = (1.0 - c.w1) * vol.at(zi, b.i1, c.i0) + c.w1 * vol.at(zi, b.i1, c.i1);
          return (1.0 - b.w1) * r0 + b.w1 * r1;
        };
        out.at(z, y, x) = static_cast<float>((1.0 - a.w1) * plane(a.i0) + a.w1 * plane(a.i1));
      }
    }
  }
  return out;
}

inline Volume resample_isotropic(const Volume& vol, double target_mm = 1.0) {
  if (!(target_mm > 0)) throw UsageError("resample_isotropic: target_mm must be > 0");
  return resample_trilinear(vol, {target_mm, target_mm, target_mm});
}

// ---------------------------------------------------------------------------
// z-axis Gaussian smoothing

// Half-sample symmetric reflection: ... c b a | a b c ... | c b a ...
inline int64_t mirror_index(int64_t i, int64_t n) {
  const int64_t period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

inline std::vector<double> gaussian_taps(double sigma) {
  const auto radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> w(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int64_t k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    w[static_cast<size_t>(k + radius)] = v;
    sum += v;
  }
  for (double& v : w) v /= sum;
  return w;
}

inline Volume gaussian_z(const Volume& vol, double sigma_vox) {
  if (!(sigma_vox >= 0)) throw UsageError("gaussian_z: sigma must be >= 0");
  if (sigma_vox == 0.0) return vol;
  const auto taps = gaussian_taps(sigma_vox);
  const auto radius = static_cast<int64_t>(taps.size() / 2);
  const Dims d = vol.dims();
  const int64_t plane = d.y * d.x;
  Volume out(d, vol.spacing(), vol.domain());
  std::vector<double> acc(static_cast<size_t>(plane));
  for (int64_t z = 0; z < d.z; ++z) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t k = -radius; k <= radius; ++k) {
      const double w = taps[static_cast<size_t>(k + radius)];
      const float* src = vol.data().data() + mirror_index(z + k, d.z) * plane;
      for (int64_t i = 0; i < plane; ++i) acc[static_cast<size_t>(i)] += w * src[i];
    }
    float* dst = out.data().data() + z * plane;
    for (int64_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(acc[static_cast<size_t>(i)]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Natural cubic spline on unit-spaced knots

// Solves for knot second derivatives M with M[0] = M[n-1] = 0 on knots
// 0..n-1. The tridiagonal system depends only on n, so its Thomas-algorithm
// factors are computed once and reused for every column.
class NaturalSpline {
 public:
  explicit NaturalSpline(int64_t n) : n_(n) {
    if (n < 2) throw UsageError("natural spline needs at least 2 knots");
    const int64_t m = n - 2;  // interior unknowns
    cprime_.resize(static_cast<size_t>(std::max<int64_t>(m, 0)));
    denom_.resize(cprime_.size());
    for (int64_t i = 0; i < m; ++i) {
      const double prev = i == 0 ? 0.0 : cprime_[static_cast<size_t>(i - 1)];
      denom_[static_cast<size_t>(i)] = 4.0 - prev;
      cprime_[static_cast<size_t>(i)] = 1.0 / denom_[static_cast<size_t>(i)];
    }
  }

  int64_t knots() const { return n_; }

  // y: n knot values; m: n outputs.
  void second_derivatives(std::span<const double> y, std::span<double> m) const {
    const int64_t k = n_ - 2;
    m[0] = 0.0;
    m[static_cast<size_t>(n_ - 1)] = 0.0;
    if (k <= 0) return;
    // forward sweep, storing d' in m[1..n-2]
    for (int64_t i = 0; i < k; ++i) {
      const size_t j = static_cast<size_t>(i + 1);
      const double rhs = 6.0 * (y[j + 1] - 2.0 * y[j] + y[j - 1]);
      const double prev = i == 0 ? 0.0 : m[j - 1];
      m[j] = (rhs - prev) / denom_[static_cast<size_t>(i)];
    }
    for (int64_t i = k - 2; i >= 0; --i) {
      const size_t j = static_cast<size_t>(i + 1);
      m[j] -= cprime_[static_cast<size_t>(i)] * m[j + 1];
    }
  }

  // Evaluates at knot coordinate t. Beyond the end knots the natural spline
  // continues linearly with its end slope.
  double eval(std::span<const double> y, std::span<const double> m, double t) const {
    const double last = static_cast<double>(n_ - 1);
    if (t < 0.0) {
      const double slope = y[1] - y[0] - m[1] / 6.0;
      return y[0] + slope * t;
    }
    if (t > last) {
      const size_t i = static_cast<size_t>(n_ - 2);
      const double slope = y[i + 1] - y[i] + m[i] / 6.0;
      return y[i + 1] + slope * (t - last);
    }
    auto i = static_cast<int64_t>(std::floor(t));
    if (i >= n_ - 1) i = n_ - 2;
    const double u = t - static_cast<double>(i);
    const double v = 1.0 - u;
    const size_t a = static_cast<size_t>(i);
    return v * y[a] + u * y[a + 1] + (v * v * v - v) * m[a] / 6.0 + (u * u * u - u) * m[a + 1] / 6.0;
  }

 private:
  int64_t n_;
  std::vector<double> cprime_, denom_;
};

// Evaluates the natural spline through each z-column at the given knot
// coordinates; returns a volume with positions.size() slices and the given z spacing.
inline Volume spline_z_at(const Volume& vol, std::span<const double> positions, double out_spacing_z) {
  const Dims d = vol.dims();
  if (d.z < 2) throw UsageError("spline interpolation along z needs at least 2 slices");
  const NaturalSpline spline(d.z);
  const Dims od{static_cast<int64_t>(positions.size()), d.y, d.x};
  Volume out(od, {out_spacing_z, vol.spacing().y, vol.spacing().x}, vol.domain());
  const int64_t plane = d.y * d.x;
  std::vector<double> y(static_cast<size_t>(d.z)), m(static_cast<size_t>(d.z));
  const float* src = vol.data().data();
  float* dst = out.data().data();
  for (int64_t p = 0; p < plane; ++p) {
    for (int64_t z = 0; z < d.z; ++z) y[static_cast<size_t>(z)] = src[z * plane + p];
    spline.second_derivatives(y, m);
    for (int64_t k = 0; k < od.z; ++k)
      dst[k * plane + p] = static_cast<float>(spline.eval(y, m, positions[static_cast<size_t>(k)]));
  }
  return out;
}

// Inserts factor-1 spline-interpolated slices between each pair of slices.
// Output has (z-1)*factor+1 slices unless out_z is given, in which case the
// grid continues (or is truncated) to out_z slices.
inline Volume spline_z_upsample(const Volume& vol, int factor, int64_t out_z = -1) {
  if (factor < 1) throw UsageError("spline_z_upsample: factor must be >= 1");
  if (factor == 1 && (out_z < 0 || out_z == vol.dims().z)) return vol;
  if (vol.dims().z < 2) throw UsageError("spline_z_upsample: need z-dim >= 2 for factor > 1");
  const int64_t n = out_z >= 0 ? out_z : (vol.dims().z - 1) * factor + 1;
  std::vector<double> pos(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) pos[static_cast<size_t>(k)] = static_cast<double>(k) / factor;
  return spline_z_at(vol, pos, vol.spacing().z / factor);
}

// Resamples z onto a knot-aligned grid with spacing target_mm starting at the first slice.
inline Volume spline_z_resample(const Volume& vol, double target_mm) {
  if (!(target_mm > 0)) throw UsageError("spline_z_resample: target must be > 0");
  const double ratio = target_mm / vol.spacing().z;
  if (ratio == 1.0) return vol;
  const double last = static_cast<double>(vol.dims().z - 1);
  const auto n = static_cast<int64_t>(std::floor(last / ratio + 1e-9)) + 1;
  std::vector<double> pos(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) pos[static_cast<size_t>(k)] = static_cast<double>(k) * ratio;
  return spline_z_at(vol, pos, target_mm);
}

// Keeps slices 0, factor, 2*factor, ...
inline Volume subsample_z(const Volume& vol, int factor) {
  if (factor < 1) throw UsageError("subsample_z: factor must be >= 1");
  if (factor == 1) return vol;
  const Dims d = vol.dims();
  const int64_t nz = (d.z - 1) / factor + 1;
  const int64_t plane = d.y * d.x;
  Volume out({nz, d.y, d.x}, {vol.spacing().z * factor, vol.spacing().y, vol.spacing().x}, vol.domain());
  for (int64_t k = 0; k < nz; ++k)
    std::copy_n(vol.data().data() + k * factor * plane, plane, out.data().data() + k * plane);
  return out;
}

}  // namespace vts
