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

// Thick-slice preprocessing and tiled, stitched generator inference on
// volumes of arbitrary extent.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "vts/checkpoint.hpp"
#include "vts/error.hpp"
#include "vts/nets.hpp"
#include "vts/training.hpp"
#include "vts/version.hpp"
#include "vts/volume.hpp"
#include "vts/vvol.hpp"

namespace vts {

// ---------------------------------------------------------------------------
// Preprocessing

// HU input is clipped and normalized; xy is resampled trilinearly to target_mm
// and z is spline-interpolated onto a knot-aligned target_mm grid.
inline Volume preprocess_thick(const Volume& vol, double target_mm = 1.0) {
  const Spacing s = vol.spacing();
  if (s.z + 1e-6 < std::max(s.y, s.x))
    throw DataError("preprocess_thick expects z-spacing >= xy-spacing, got " + std::to_string(s.z) + " mm vs " +
                    std::to_string(std::max(s.y, s.x)) + " mm");
  Volume v = vol.domain() == ValueDomain::kHU ? normalize_hu(vol) : vol;
  if (s.y != target_mm || s.x != target_mm) v = resample_trilinear(v, {s.z, target_mm, target_mm});
  if (s.z != target_mm) {
    if (v.dims().z < 2) throw DataError("preprocess_thick needs at least 2 slices to interpolate z");
    v = spline_z_resample(v, target_mm);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Network application

inline Tensor<float> volume_tensor(const Volume& v) {
  const Dims d = v.dims();
  return Tensor<float>(Shape{1, 1, d.z, d.y, d.x}, std::vector<float>(v.data().begin(), v.data().end()));
}

// Copies the box [origin, origin + size) of `v`, reflecting out-of-range indices.
inline Tensor<float> reflect_window(const Volume& v, Dims origin, Dims size) {
  const Dims d = v.dims();
  Tensor<float> t(Shape{1, 1, size.z, size.y, size.x});
  std::vector<int64_t> ix(static_cast<size_t>(size.x));
  for (int64_t x = 0; x < size.x; ++x) ix[static_cast<size_t>(x)] = mirror_index(origin.x + x, d.x);
  float* dst = t.ptr();
  for (int64_t z = 0; z < size.z; ++z) {
    const int64_t sz = mirror_index(origin.z + z, d.z);
    for (int64_t y = 0; y < size.y; ++y) {
      const float* row = v.data().data() + v.index(sz, mirror_index(origin.y + y, d.y), 0);
      for (int64_t x = 0; x < size.x; ++x) *dst++ = row[ix[static_cast<size_t>(x)]];
    }
  }
  return t;
}

inline int64_t round_up(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

struct TileOptions {
  int64_t tile = 160;                      // core edge written per tile
  std::optional<int64_t> margin;           // context on each side; receptive field rounded up when unset
  double memory_cap_mb = 4096;             // rejects windows whose estimated footprint exceeds this
};

// Tiles and the margin must keep every window on the network's stride grid.
inline int64_t tile_granularity(const ImageNet<float>& net) { return std::max<int64_t>(16, net.divisor()); }

inline int64_t default_margin(const ImageNet<float>& net) {
  return round_up(net.receptive_radius(), tile_granularity(net));
}

// Upper bound on bytes held while running one cubic window of edge `window`:
// every traced activation plus the largest column buffer.
inline double estimate_window_bytes(ImageNet<float>& net, int64_t window) {
  const int64_t probe = std::max<int64_t>(net.divisor(), 32);
  const auto layers = net.describe(probe);
  const double scale = static_cast<double>(window) / static_cast<double>(probe);
  double acts = static_cast<double>(window * window * window);
  double cols = static_cast<double>(int64_t{1} << 20);
  for (const auto& l : layers) {
    const double edge = static_cast<double>(l.out_size) * scale;
    acts += static_cast<double>(l.out_channels) * edge * edge * edge;
    if (l.kernel > 0) {
      const double k3 = static_cast<double>(l.kernel) * l.kernel * l.kernel;
      const double in_ch = static_cast<double>(l.in_channels);
      cols = std::max(cols, k3 * std::max(in_ch, static_cast<double>(l.out_channels)) * edge * edge);
    }
  }
  return 4.0 * (acts + cols);
}

struct TilePlan {
  int64_t tile = 0, margin = 0, window = 0;
  Dims tiles;
};

inline TilePlan plan_tiles(ImageNet<float>& net, Dims dims, const TileOptions& opt) {
  const int64_t g = tile_granularity(net);
  if (opt.tile <= 0 || opt.tile % g != 0)
    throw UsageError("tile " + std::to_string(opt.tile) + " must be a positive multiple of " + std::to_string(g));
  const int64_t rf = net.receptive_radius();
  TilePlan p;
  p.tile = opt.tile;
  p.margin = opt.margin.value_or(default_margin(net));
  if (p.margin < rf)
    throw UsageError("margin " + std::to_string(p.margin) + " is below the receptive field; minimum is " +
                     std::to_string(rf) + " (use " + std::to_string(round_up(rf, g)) + ")");
  if (p.margin % g != 0)
    throw UsageError("margin " + std::to_string(p.margin) + " must be a multiple of " + std::to_string(g));
  p.window = p.tile + 2 * p.margin;
  p.tiles = {(dims.z + p.tile - 1) / p.tile, (dims.y + p.tile - 1) / p.tile, (dims.x + p.tile - 1) / p.tile};
  const double mb = estimate_window_bytes(net, p.window) / (1024.0 * 1024.0);
  if (mb > opt.memory_cap_mb)
    throw UsageError("tile " + std::to_string(p.tile) + " with margin " + std::to_string(p.margin) + " needs about " +
                     std::to_string(static_cast<int64_t>(mb)) + " MB, above the cap of " +
                     std::to_string(static_cast<int64_t>(opt.memory_cap_mb)) + " MB");
  return p;
}

// Runs the network on overlapping reflect-padded windows and stitches the
// central tile of each; output dims equal input dims.
inline Volume infer_tiled(const Volume& vol, ImageNet<float>& net, const TileOptions& opt) {
  if (vol.domain() != ValueDomain::kNormalized) throw UsageError("infer_tiled expects a normalized volume");
  if (net.training()) throw UsageError("infer_tiled needs the network in inference mode");
  const Dims d = vol.dims();
  const TilePlan p = plan_tiles(net, d, opt);
  Volume out(d, vol.spacing(), ValueDomain::kNormalized);
  const int64_t w = p.window;
  for (int64_t tz = 0; tz < p.tiles.z; ++tz)
    for (int64_t ty = 0; ty < p.tiles.y; ++ty)
      for (int64_t tx = 0; tx < p.tiles.x; ++tx) {
        const Dims o{tz * p.tile, ty * p.tile, tx * p.tile};
        const Tensor<float> y =
            net.predict(reflect_window(vol, {o.z - p.margin, o.y - p.margin, o.x - p.margin}, {w, w, w}));
        const Dims n{std::min(p.tile, d.z - o.z), std::min(p.tile, d.y - o.y), std::min(p.tile, d.x - o.x)};
        for (int64_t z = 0; z < n.z; ++z)
          for (int64_t yy = 0; yy < n.y; ++yy) {
            const float* src = y.ptr() + ((z + p.margin) * w + (yy + p.margin)) * w + p.margin;
            std::copy_n(src, n.x, &out.at(o.z + z, o.y + yy, o.x));
          }
      }
  return out;
}

// Runs the network once on the whole volume, reflect-padded up to the stride divisor.
inline Volume infer_whole(const Volume& vol, ImageNet<float>& net) {
  if (vol.domain() != ValueDomain::kNormalized) throw UsageError("infer_whole expects a normalized volume");
  const Dims d = vol.dims();
  const int64_t g = net.divisor();
  const Dims pd{round_up(d.z, g), round_up(d.y, g), round_up(d.x, g)};
  const Dims lo{(pd.z - d.z) / 2, (pd.y - d.y) / 2, (pd.x - d.x) / 2};
  const Tensor<float> y = net.predict(reflect_window(vol, {-lo.z, -lo.y, -lo.x}, pd));
  Volume out(d, vol.spacing(), ValueDomain::kNormalized);
  for (int64_t z = 0; z < d.z; ++z)
    for (int64_t yy = 0; yy < d.y; ++yy)
      std::copy_n(y.ptr() + ((z + lo.z) * pd.y + yy + lo.y) * pd.x + lo.x, d.x, &out.at(z, yy, 0));
  return out;
}

// ---------------------------------------------------------------------------
// File-level driver

struct InferenceRun {
  std::filesystem::path input, checkpoint, output;
  TileOptions tiles;
};

// Reads a thick-slice vvol, reconstructs it at 1 mm and writes an int16 HU vvol
// whose sidecar records the checkpoint hash and tool version.
inline nlohmann::json run_inference(const InferenceRun& run) {
  const Volume thick = read_vvol(run.input);
  const Checkpoint ck = load_checkpoint(run.checkpoint);
  auto net = load_image_net(ck);
  const Volume pre = preprocess_thick(thick);
  const Volume thin = infer_tiled(pre, *net, run.tiles);
  const TilePlan plan = plan_tiles(*net, pre.dims(), run.tiles);
  nlohmann::json prov{{"tool_version", std::string(kToolVersion)},
                      {"checkpoint", run.checkpoint.string()},
                      {"checkpoint_sha1", git_blob_sha1(run.checkpoint)},
                      {"input", run.input.string()},
                      {"tile", plan.tile},
                      {"margin", plan.margin},
                      {"model", ck.header.value("model", std::string())}};
  write_vvol(run.output, denormalize(thin), SampleType::kInt16, prov);
  return prov;
}

}  // namespace vts
