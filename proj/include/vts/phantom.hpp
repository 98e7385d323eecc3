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

// Deterministic synthetic CT phantoms, 1 mm isotropic, in HU.
//
// Each phantom has a soft-tissue body outline, a column of bright periodic
// "vertebra" disks along z (the high-contrast z-structure a thick-slice scan
// blurs away), thin oblique "vessels", and a part-specific layout.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "vts/body_part.hpp"
#include "vts/error.hpp"
#include "vts/volume.hpp"

namespace vts {

struct PhantomSpec {
  Dims dims{64, 64, 64};
  uint64_t seed = 0;
  BodyPart body_part = BodyPart::kChest;
  double vertebra_period_mm = 12.0;
  int vessel_count = 6;
};

inline constexpr float kHuAir = -1000.0f;
inline constexpr float kHuSoftTissue = 40.0f;
inline constexpr float kHuBone = 700.0f;
inline constexpr float kHuVessel = 300.0f;
inline constexpr float kHuLung = -800.0f;
inline constexpr float kHuDisc = 80.0f;

struct SpineAxis {
  double y, x;
};

// In-plane centre of the periodic disk column.
inline SpineAxis spine_axis(const PhantomSpec& spec) {
  const double cy = 0.5 * static_cast<double>(spec.dims.y - 1);
  const double cx = 0.5 * static_cast<double>(spec.dims.x - 1);
  const double ry = 0.5 * static_cast<double>(spec.dims.y);
  const double rx = 0.5 * static_cast<double>(spec.dims.x);
  switch (spec.body_part) {
    case BodyPart::kHead: return {cy + 0.18 * ry, cx};
    case BodyPart::kChest: return {cy + 0.42 * ry, cx};
    case BodyPart::kAbdomen: return {cy + 0.38 * ry, cx};
    case BodyPart::kLeg: return {cy, cx - 0.45 * rx};
  }
  return {cy, cx};
}

namespace detail {

// Smooth jitter: a couple of low-frequency sinusoids along z and in-plane.
struct Jitter {
  double amp, fz, fy, fx, pz, py, px;
  double operator()(double z, double y, double x) const {
    return amp * std::sin(fz * z + pz) * std::cos(fy * y + py) + 0.5 * amp * std::sin(fx * x + px);
  }
};

inline Jitter make_jitter(std::mt19937_64& rng, double amp) {
  std::uniform_real_distribution<double> f(0.02, 0.12), ph(0.0, 2.0 * std::numbers::pi);
  return {amp, f(rng), f(rng), f(rng), ph(rng), ph(rng), ph(rng)};
}

struct Tube {
  double y0, x0, ay, ax, wy, wx, py, px, radius;
};

inline double sq(double v) { return v * v; }

}  // namespace detail

inline Volume generate_phantom(const PhantomSpec& spec) {
  const Dims d = spec.dims;
  if (d.z < 32 || d.y < 32 || d.x < 32) throw UsageError("phantom dims must each be >= 32");
  if (!(spec.vertebra_period_mm > 1.0)) throw UsageError("vertebra_period_mm must be > 1");
  if (spec.vessel_count < 0) throw UsageError("vessel_count must be >= 0");

  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + static_cast<uint64_t>(spec.body_part) + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;

  const double cy = 0.5 * static_cast<double>(d.y - 1), cx = 0.5 * static_cast<double>(d.x - 1);
  const double hy = 0.5 * static_cast<double>(d.y), hx = 0.5 * static_cast<double>(d.x);
  const double hmin = std::min(hy, hx);

  const auto body_jit = detail::make_jitter(rng, 12.0);
  const auto bone_jit = detail::make_jitter(rng, 60.0);
  const auto vessel_jit = detail::make_jitter(rng, 30.0);
  const auto organ_jit = detail::make_jitter(rng, 10.0);

  // Body outline: radii modulated slowly along z.
  double body_ry = 0.0, body_rx = 0.0;
  switch (spec.body_part) {
    case BodyPart::kHead: body_ry = body_rx = 0.72 * hmin; break;
    case BodyPart::kChest: body_ry = 0.70 * hy; body_rx = 0.90 * hx; break;
    case BodyPart::kAbdomen: body_ry = 0.76 * hy; body_rx = 0.86 * hx; break;
    case BodyPart::kLeg: body_ry = 0.40 * hy; body_rx = 0.40 * hx; break;
  }
  const double outline_freq = two_pi / (static_cast<double>(d.z) * (1.5 + unit(rng)));
  const double outline_phase = two_pi * unit(rng);

  const SpineAxis axis = spine_axis(spec);
  const double disk_r = std::max(3.0, 0.14 * hmin);
  const double period = spec.vertebra_period_mm;
  const double disk_fraction = 0.6;
  const double disk_phase = period * unit(rng);

  std::vector<detail::Tube> tubes;
  for (int i = 0; i < spec.vessel_count; ++i) {
    detail::Tube t{};
    const double ang = two_pi * unit(rng);
    const double rad = (0.15 + 0.45 * unit(rng)) * std::min(body_ry, body_rx);
    t.y0 = cy + rad * std::sin(ang);
    t.x0 = cx + rad * std::cos(ang);
    if (spec.body_part == BodyPart::kLeg) t.x0 += (i % 2 == 0 ? -0.45 : 0.45) * hx - (t.x0 - cx) * 0.5;
    t.ay = (0.04 + 0.12 * unit(rng)) * hmin;
    t.ax = (0.04 + 0.12 * unit(rng)) * hmin;
    t.wy = two_pi / (static_cast<double>(d.z) * (0.4 + unit(rng)));
    t.wx = two_pi / (static_cast<double>(d.z) * (0.4 + unit(rng)));
    t.py = two_pi * unit(rng);
    t.px = two_pi * unit(rng);
    t.radius = 0.9 + 0.9 * unit(rng);
    tubes.push_back(t);
  }

  Volume vol(d, {1.0, 1.0, 1.0}, ValueDomain::kHU, kHuAir);
  for (int64_t z = 0; z < d.z; ++z) {
    const double zf = static_cast<double>(z);
    const double swell = 1.0 + 0.06 * std::sin(outline_freq * zf + outline_phase);
    const double phase = std::fmod(zf + disk_phase, period);
    const bool in_disk = phase < disk_fraction * period;
    for (int64_t y = 0; y < d.y; ++y) {
      const double yf = static_cast<double>(y);
      for (int64_t x = 0; x < d.x; ++x) {
        const double xf = static_cast<double>(x);
        float v = kHuAir;

        // body
        bool inside = false;
        double inner = 0.0;  // normalized elliptical radius
        if (spec.body_part == BodyPart::kLeg) {
          for (double side : {-0.45, 0.45}) {
            const double lx = cx + side * hx;
            const double r = detail::sq((yf - cy) / (body_ry * swell)) + detail::sq((xf - lx) / (body_rx * swell));
            if (r <= 1.0) {
              inside = true;
              inner = r;
            }
          }
        } else {
          inner = detail::sq((yf - cy) / (body_ry * swell)) + detail::sq((xf - cx) / (body_rx * swell));
          inside = inner <= 1.0;
        }
        if (inside) v = kHuSoftTissue + static_cast<float>(body_jit(zf, yf, xf));

        if (inside) {
          switch (spec.body_part) {
            case BodyPart::kHead:
              if (inner > 0.78) v = kHuBone + static_cast<float>(bone_jit(zf, yf, xf));  // skull
              break;
            case BodyPart::kChest:
              for (double side : {-0.42, 0.42}) {
                const double r = detail::sq((yf - (cy - 0.05 * hy)) / (0.45 * hy)) +
                                 detail::sq((xf - (cx + side * hx)) / (0.30 * hx));
                if (r <= 1.0) v = kHuLung + static_cast<float>(organ_jit(zf, yf, xf));
              }
              break;
            case BodyPart::kAbdomen: {
              const double r = detail::sq((yf - (cy - 0.1 * hy)) / (0.35 * hy)) +
                               detail::sq((xf - (cx - 0.3 * hx)) / (0.35 * hx)) +
                               detail::sq((zf - 0.5 * static_cast<double>(d.z)) / (0.6 * static_cast<double>(d.z)));
              if (r <= 1.0) v = 60.0f + static_cast<float>(organ_jit(zf, yf, xf));
              break;
            }
            case BodyPart::kLeg: break;
          }
        }

        // vessels
        for (const auto& t : tubes) {
          const double ty = t.y0 + t.ay * std::sin(t.wy * zf + t.py);
          const double tx = t.x0 + t.ax * std::sin(t.wx * zf + t.px);
          if (detail::sq(yf - ty) + detail::sq(xf - tx) <= t.radius * t.radius && inside)
            v = kHuVessel + static_cast<float>(vessel_jit(zf, yf, xf));
        }

        // periodic disk column (and the mirrored one in legs); drawn last so vessels never cut it
        auto disk_hit = [&](double ay, double ax) {
          return detail::sq(yf - ay) + detail::sq(xf - ax) <= disk_r * disk_r;
        };
        bool column = disk_hit(axis.y, axis.x);
        if (spec.body_part == BodyPart::kLeg) column = column || disk_hit(axis.y, 2.0 * cx - axis.x);
        if (column) v = in_disk ? kHuBone + static_cast<float>(bone_jit(zf, yf, xf)) : kHuDisc;

        vol.at(z, y, x) = std::clamp(v, -kHuClip, kHuClip);
      }
    }
  }
  return vol;
}

}  // namespace vts
