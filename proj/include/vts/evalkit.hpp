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

// Image-quality metrics, the non-learned cubic baseline and the evaluation
// harness that writes the method comparison table and slice montages.

#pragma once

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vts/body_part.hpp"
#include "vts/degrader.hpp"
#include "vts/error.hpp"
#include "vts/inference.hpp"
#include "vts/training.hpp"
#include "vts/volume.hpp"

namespace vts {

// ---------------------------------------------------------------------------
// Metrics

inline void require_same_shape(const Volume& a, const Volume& b, const char* what) {
  if (!(a.dims() == b.dims()))
    throw UsageError(std::string(what) + ": shape mismatch (" + std::to_string(a.dims().z) + "x" +
                     std::to_string(a.dims().y) + "x" + std::to_string(a.dims().x) + " vs " +
                     std::to_string(b.dims().z) + "x" + std::to_string(b.dims().y) + "x" +
                     std::to_string(b.dims().x) + ")");
}

// Infinity when the volumes are identical.
inline double psnr(const Volume& a, const Volume& b, double data_range = 2.0) {
  require_same_shape(a, b, "psnr");
  const auto x = a.data();
  const auto y = b.data();
  double sse = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    sse += d * d;
  }
  if (sse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / (sse / static_cast<double>(x.size())));
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double data_range = 2.0;
};

namespace detail {

inline std::vector<double> gaussian_window(int n, double sigma) {
  std::vector<double> w(static_cast<size_t>(n));
  const double c = (n - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += w[static_cast<size_t>(i)] = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
  for (double& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering of a (z, y, x) array along one axis.
inline std::vector<double> filter_axis(const std::vector<double>& in, std::array<int64_t, 3>& dims, int axis,
                                       const std::vector<double>& w) {
  const auto n = static_cast<int64_t>(w.size());
  std::array<int64_t, 3> od = dims;
  od[static_cast<size_t>(axis)] -= n - 1;
  std::vector<double> out(static_cast<size_t>(od[0] * od[1] * od[2]), 0.0);
  const std::array<int64_t, 3> stride{dims[1] * dims[2], dims[2], 1};
  const int64_t step = stride[static_cast<size_t>(axis)];
  for (int64_t z = 0; z < od[0]; ++z)
    for (int64_t y = 0; y < od[1]; ++y) {
      double* dst = out.data() + (z * od[1] + y) * od[2];
      const double* src = in.data() + z * stride[0] + y * stride[1];
      for (int64_t k = 0; k < n; ++k) {
        const double wk = w[static_cast<size_t>(k)];
        const double* s = src + k * step;
        for (int64_t x = 0; x < od[2]; ++x) dst[x] += wk * s[x];
      }
    }
  dims = od;
  return out;
}

inline std::vector<double> gaussian_filter_valid(std::vector<double> v, std::array<int64_t, 3> dims,
                                                 const std::vector<double>& w) {
  for (int axis = 0; axis < 3; ++axis) v = filter_axis(v, dims, axis, w);
  return v;
}

}  // namespace detail

// Mean local SSIM over every window position lying fully inside the volume.
inline double ssim3d(const Volume& a, const Volume& b, const SsimParams& p = {}) {
  require_same_shape(a, b, "ssim3d");
  const Dims d = a.dims();
  if (d.z < p.window || d.y < p.window || d.x < p.window)
    throw UsageError("ssim3d needs every dim >= " + std::to_string(p.window));
  const auto w = detail::gaussian_window(p.window, p.sigma);
  const std::array<int64_t, 3> dims{d.z, d.y, d.x};
  const auto n = static_cast<size_t>(d.count());
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = a.data()[i];
    y[i] = b.data()[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = detail::gaussian_filter_valid(std::move(x), dims, w);
  const auto my = detail::gaussian_filter_valid(std::move(y), dims, w);
  const auto sxx = detail::gaussian_filter_valid(std::move(xx), dims, w);
  const auto syy = detail::gaussian_filter_valid(std::move(yy), dims, w);
  const auto sxy = detail::gaussian_filter_valid(std::move(xy), dims, w);
  const double c1 = std::pow(p.k1 * p.data_range, 2), c2 = std::pow(p.k2 * p.data_range, 2);
  double sum = 0.0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double va = sxx[i] - mx[i] * mx[i], vb = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
    sum += (2 * mx[i] * my[i] + c1) * (2 * cov + c2) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (va + vb + c2));
  }
  return sum / static_cast<double>(mx.size());
}

// ---------------------------------------------------------------------------
// Cubic baseline

inline double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  return 0.5 * ((2 * p1) + (-p0 + p2) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t * t +
                (-p0 + 3 * p1 - 3 * p2 + p3) * t * t * t);
}

// Re-interpolates z from the retained slices 0, factor, 2*factor, ... with
// Catmull-Rom cubics; ends use linearly extrapolated ghost knots.
inline Volume baseline_tricubic(const Volume& thick, int factor) {
  if (factor < 1) throw UsageError("baseline_tricubic: factor must be >= 1");
  const Dims d = thick.dims();
  const int64_t nk = (d.z - 1) / factor + 1;
  if (factor == 1 || nk < 2) return thick;
  const int64_t plane = d.y * d.x;
  Volume out(d, thick.spacing(), thick.domain());
  const float* src = thick.data().data();
  auto at = [&](int64_t k, int64_t p) { return static_cast<double>(src[k * factor * plane + p]); };
  auto knot = [&](int64_t k, int64_t p) {
    if (k < 0) return 2.0 * at(0, p) - at(1, p);
    if (k >= nk) return 2.0 * at(nk - 1, p) - at(nk - 2, p);
    return at(k, p);
  };
  for (int64_t z = 0; z < d.z; ++z) {
    const int64_t seg = std::min(z / factor, nk - 2);
    const double t = static_cast<double>(z - seg * factor) / factor;
    float* dst = out.data().data() + z * plane;
    for (int64_t p = 0; p < plane; ++p)
      dst[p] = static_cast<float>(catmull_rom(knot(seg - 1, p), knot(seg, p), knot(seg + 1, p), knot(seg + 2, p), t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Slice montages

struct HuWindow {
  std::string name;
  double lo, hi;
};

inline const std::array<HuWindow, 2> kMontageWindows = {HuWindow{"soft", -150.0, 250.0},
                                                        HuWindow{"bone", -1000.0, 1500.0}};

inline void write_png_gray(const std::filesystem::path& path, int64_t width, int64_t height,
                           const std::vector<uint8_t>& pixels) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw DataError("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t r = 0; r < height; ++r)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

// One row per volume holding its centre axial, coronal and sagittal slices.
inline void write_montage(const std::filesystem::path& path, const std::vector<const Volume*>& rows,
                          const HuWindow& win) {
  if (rows.empty()) throw UsageError("montage needs at least one volume");
  const Dims d = rows.front()->dims();
  constexpr int64_t kGap = 2;
  const int64_t cell_w = std::max(d.x, d.y), cell_h = std::max(d.y, d.z);
  const int64_t width = 3 * cell_w + 2 * kGap;
  const auto nrows = static_cast<int64_t>(rows.size());
  const int64_t height = nrows * cell_h + (nrows - 1) * kGap;
  std::vector<uint8_t> px(static_cast<size_t>(width * height), 0);
  auto gray = [&](float v, double to_hu) {
    const double hu = static_cast<double>(v) * to_hu;
    return static_cast<uint8_t>(std::lround(std::clamp((hu - win.lo) / (win.hi - win.lo), 0.0, 1.0) * 255.0));
  };
  for (int64_t r = 0; r < nrows; ++r) {
    const Volume& v = *rows[static_cast<size_t>(r)];
    if (!(v.dims() == d)) throw UsageError("montage volumes must share dims");
    const int64_t top = r * (cell_h + kGap);
    const double to_hu = v.domain() == ValueDomain::kNormalized ? kHuClip : 1.0;
    auto put = [&](int64_t col, int64_t row, int64_t c, float value) {
      px[static_cast<size_t>((top + row) * width + c * (cell_w + kGap) + col)] = gray(value, to_hu);
    };
    for (int64_t y = 0; y < d.y; ++y)
      for (int64_t x = 0; x < d.x; ++x) put(x, y, 0, v.at(d.z / 2, y, x));
    for (int64_t z = 0; z < d.z; ++z)
      for (int64_t x = 0; x < d.x; ++x) put(x, d.z - 1 - z, 1, v.at(z, d.y / 2, x));
    for (int64_t z = 0; z < d.z; ++z)
      for (int64_t y = 0; y < d.y; ++y) put(y, d.z - 1 - z, 2, v.at(z, y, d.x / 2));
  }
  write_png_gray(path, width, height, px);
}

// ---------------------------------------------------------------------------
// Evaluation harness

inline const std::vector<std::string> kEvalMethods = {"spline",  "tricubic",   "srcnn",    "pix2pix",
                                                      "vts",     "vts-nocond", "vts-nohf", "gt"};

inline bool is_learned_method(const std::string& m) {
  return m == "srcnn" || m == "pix2pix" || m == "vts" || m == "vts-nocond" || m == "vts-nohf";
}

struct ReferenceScore {
  std::string method;
  std::string label;
  double psnr_db, ssim;
};

// Published comparison figures, reported alongside desk-scale measurements.
inline const std::vector<ReferenceScore> kReferenceScores = {
    {"tricubic", "Bicubic", 32.34, 0.878},    {"srcnn", "SRCNN", 33.73, 0.904},
    {"pix2pix", "Pix2Pix", 35.14, 0.925},     {"vts", "VTS", 35.73, 0.933},
    {"vts-nocond", "(w/o) condition", 35.17, 0.924}, {"vts-nohf", "(w/o) HF pred.", 33.70, 0.905},
    {"gt", "Ground Truth", std::numeric_limits<double>::infinity(), 1.000}};

struct EvalCase {
  std::string name;
  Volume thin;  // normalized, 1 mm isotropic
  BodyPart body_part = BodyPart::kHead;
};

struct EvalDegrade {
  int factor = 4;
  std::optional<double> sigma_vox;  // slab profile with FWHM equal to the slice interval when unset
  double noise_std = 0.005;
  uint64_t seed = 0;

  DegradeParams params() const {
    DegradeParams p;
    p.factor = factor;
    p.sigma_vox = sigma_vox.value_or(factor / (2.0 * std::sqrt(2.0 * std::log(2.0))));
    p.noise_std = noise_std;
    return p;
  }
};

inline void to_json(nlohmann::json& j, const EvalDegrade& d) {
  j = {{"factor", d.factor}, {"sigma_vox", d.params().sigma_vox}, {"noise_std", d.noise_std}, {"seed", d.seed}};
}

// Deterministic thick-slice input for test case `index`.
inline Volume degrade_case(const Volume& thin, const EvalDegrade& deg, size_t index) {
  std::seed_seq seq{static_cast<uint64_t>(deg.seed), static_cast<uint64_t>(index), uint64_t{0xe7a1}};
  std::mt19937_64 rng(seq);
  return degrade(thin, deg.params(), rng);
}

struct EvalRecord {
  std::string method;
  double psnr_db = 0, ssim = 0;
  int64_t n_volumes = 0;
};

struct VolumeScore {
  std::string method, case_name;
  double psnr_db = 0, ssim = 0;
};

struct EvalOptions {
  std::vector<std::string> methods;
  std::filesystem::path ckpt_dir;
  std::filesystem::path out_dir;  // nothing is written when empty
  EvalDegrade degrade;
  std::optional<TileOptions> tiles;  // whole-volume inference when unset
  bool montages = true;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<VolumeScore> per_volume;

  const EvalRecord& at(const std::string& method) const {
    for (const auto& r : records)
      if (r.method == method) return r;
    throw UsageError("no evaluation record for '" + method + "'");
  }
};

inline std::filesystem::path checkpoint_for(const std::filesystem::path& dir, const std::string& method) {
  for (const auto& p : {dir / (method + ".ckpt"), dir / method / "model.ckpt"})
    if (std::filesystem::exists(p)) return p;
  throw DataError("missing checkpoint for method '" + method + "' in " + dir.string() + " (expected " + method +
                  ".ckpt or " + method + "/model.ckpt)");
}

inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline void write_metrics_csv(const std::filesystem::path& path, const EvalReport& rep) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "method,psnr_db,ssim,n_volumes\n";
  for (const auto& r : rep.records)
    out << r.method << ',' << format_metric(r.psnr_db) << ',' << format_metric(r.ssim) << ',' << r.n_volumes << '\n';
}

inline EvalReport run_eval(const std::vector<EvalCase>& cases, const EvalOptions& opt) {
  if (cases.empty()) throw DataError("no test volumes to evaluate");
  if (opt.methods.empty()) throw UsageError("no evaluation methods given");
  for (const auto& m : opt.methods)
    if (std::find(kEvalMethods.begin(), kEvalMethods.end(), m) == kEvalMethods.end())
      throw UsageError("unknown evaluation method '" + m + "'");

  std::map<std::string, std::unique_ptr<ImageNet<float>>> nets;
  std::map<std::string, std::string> hashes;
  for (const auto& m : opt.methods) {
    if (!is_learned_method(m)) continue;
    const auto path = checkpoint_for(opt.ckpt_dir, m);
    const Checkpoint ck = load_checkpoint(path);
    const std::string kind = ck.header.value("model", std::string());
    if (kind != m) throw DataError(path.string() + " holds a '" + kind + "' model, expected '" + m + "'");
    nets[m] = load_image_net(ck);
    hashes[m] = git_blob_sha1(path);
  }

  EvalReport rep;
  for (size_t i = 0; i < cases.size(); ++i) {
    const EvalCase& c = cases[i];
    const Volume thick = degrade_case(c.thin, opt.degrade, i);
    std::vector<Volume> outputs;
    outputs.reserve(opt.methods.size());
    for (const auto& m : opt.methods) {
      if (m == "spline")
        outputs.push_back(thick);
      else if (m == "tricubic")
        outputs.push_back(baseline_tricubic(thick, opt.degrade.factor));
      else if (m == "gt")
        outputs.push_back(c.thin);
      else {
        auto& net = *nets.at(m);
        outputs.push_back(opt.tiles ? infer_tiled(thick, net, *opt.tiles) : infer_whole(thick, net));
      }
      rep.per_volume.push_back({m, c.name, psnr(outputs.back(), c.thin), ssim3d(outputs.back(), c.thin)});
    }
    if (!opt.out_dir.empty() && opt.montages) {
      std::vector<const Volume*> rows;
      for (const auto& v : outputs) rows.push_back(&v);
      for (const auto& w : kMontageWindows)
        write_montage(opt.out_dir / "cases" / (c.name + "_" + w.name + ".png"), rows, w);
    }
  }

  for (const auto& m : opt.methods) {
    EvalRecord r{m, 0.0, 0.0, 0};
    for (const auto& s : rep.per_volume)
      if (s.method == m) {
        r.psnr_db += s.psnr_db;
        r.ssim += s.ssim;
        ++r.n_volumes;
      }
    r.psnr_db /= static_cast<double>(r.n_volumes);
    r.ssim /= static_cast<double>(r.n_volumes);
    rep.records.push_back(r);
  }

  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    write_metrics_csv(opt.out_dir / "metrics.csv", rep);
    std::ofstream pv(opt.out_dir / "per_volume.csv");
    pv << "method,case,psnr_db,ssim\n";
    for (const auto& s : rep.per_volume)
      pv << s.method << ',' << s.case_name << ',' << format_metric(s.psnr_db) << ',' << format_metric(s.ssim) << '\n';
    nlohmann::json ref = nlohmann::json::array();
    for (const auto& r : kReferenceScores)
      if (std::find(opt.methods.begin(), opt.methods.end(), r.method) != opt.methods.end())
        ref.push_back({{"method", r.method}, {"label", r.label}, {"psnr_db", format_metric(r.psnr_db)},
                       {"ssim", r.ssim}});
    nlohmann::json summary{{"degrade", opt.degrade},
                           {"n_volumes", cases.size()},
                           {"checkpoint_sha1", hashes},
                           {"reference_scores", ref}};
    std::ofstream(opt.out_dir / "summary.json") << summary.dump(2) << '\n';
  }
  return rep;
}

}  // namespace vts
