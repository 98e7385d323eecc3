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

// 3D convolution kernels: im2col over blocks of output z-planes followed by
// an Eigen GEMM. Transposed convolution reuses the same pair of gather /
// scatter routines with the roles of input and output swapped.

#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vts/nn/tensor.hpp"

namespace vts::nn {

struct ConvGeom {
  int kernel = 3;
  int stride = 1;
  int pad_lo = 1;
  int pad_hi = 1;

  int64_t out_len(int64_t n) const { return (n + pad_lo + pad_hi - kernel) / stride + 1; }
  // Length of a forward-conv input that maps onto n outputs (transposed-conv output length).
  int64_t in_len(int64_t n) const { return (n - 1) * stride - pad_lo - pad_hi + kernel; }
  bool operator==(const ConvGeom&) const = default;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <class T>
using StridedMap = Eigen::Map<RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <class T>
using CStridedMap = Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

struct Extent {
  int64_t d, h, w;
  int64_t count() const { return d * h * w; }
};

// Rows of the column matrix per output block are ordered (c, kz, ky, kx).
// Columns cover output planes [z0, z1).
// Output positions [lo, hi) along an axis whose input index o * s + off lies inside [0, n).
inline std::pair<int64_t, int64_t> valid_range(int64_t off, int s, int64_t n, int64_t out_n) {
  const int64_t lo = off >= 0 ? 0 : std::min(out_n, (-off + s - 1) / s);
  const int64_t hi = n - 1 - off < 0 ? 0 : std::min(out_n, (n - 1 - off) / s + 1);
  return {lo, std::max(lo, hi)};
}

template <class T>
void im2col(const T* src, int64_t channels, Extent in, Extent out, const ConvGeom& g, int64_t z0, int64_t z1,
            T* cols) {
  const int k = g.kernel, s = g.stride, p = g.pad_lo;
  const int64_t cols_n = (z1 - z0) * out.h * out.w;
  for (int64_t c = 0; c < channels; ++c)
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          T* dst = cols + (((c * k + kz) * k + ky) * k + kx) * cols_n;
          const auto [xlo, xhi] = valid_range(kx - p, s, in.w, out.w);
          for (int64_t oz = z0; oz < z1; ++oz) {
            const int64_t iz = oz * s - p + kz;
            if (iz < 0 || iz >= in.d) {
              std::fill_n(dst, out.h * out.w, T(0));
              dst += out.h * out.w;
              continue;
            }
            for (int64_t oy = 0; oy < out.h; ++oy, dst += out.w) {
              const int64_t iy = oy * s - p + ky;
              if (iy < 0 || iy >= in.h) {
                std::fill_n(dst, out.w, T(0));
                continue;
              }
              const T* row = src + ((c * in.d + iz) * in.h + iy) * in.w;
              const int64_t off = kx - p;
              std::fill_n(dst, xlo, T(0));
              if (s == 1) {
                std::copy(row + xlo + off, row + xhi + off, dst + xlo);
              } else {
                for (int64_t ox = xlo; ox < xhi; ++ox) dst[ox] = row[ox * s + off];
              }
              std::fill(dst + xhi, dst + out.w, T(0));
            }
          }
        }
}

template <class T>
void col2im(const T* cols, int64_t channels, Extent in, Extent out, const ConvGeom& g, int64_t z0, int64_t z1,
            T* dst_img) {
  const int k = g.kernel, s = g.stride, p = g.pad_lo;
  const int64_t cols_n = (z1 - z0) * out.h * out.w;
  for (int64_t c = 0; c < channels; ++c)
    for (int kz = 0; kz < k; ++kz)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T* src = cols + (((c * k + kz) * k + ky) * k + kx) * cols_n;
          const auto [xlo, xhi] = valid_range(kx - p, s, in.w, out.w);
          for (int64_t oz = z0; oz < z1; ++oz) {
            const int64_t iz = oz * s - p + kz;
            if (iz < 0 || iz >= in.d) {
              src += out.h * out.w;
              continue;
            }
            for (int64_t oy = 0; oy < out.h; ++oy, src += out.w) {
              const int64_t iy = oy * s - p + ky;
              if (iy < 0 || iy >= in.h) continue;
              T* row = dst_img + ((c * in.d + iz) * in.h + iy) * in.w;
              const int64_t off = kx - p;
              if (s == 1) {
                for (int64_t ox = xlo; ox < xhi; ++ox) row[ox + off] += src[ox];
              } else {
                for (int64_t ox = xlo; ox < xhi; ++ox) row[ox * s + off] += src[ox];
              }
            }
          }
        }
}

// Number of output planes per block, keeping the column buffer near `budget` elements.
inline int64_t planes_per_block(int64_t rows, int64_t plane, int64_t depth, int64_t budget = int64_t{1} << 20) {
  const int64_t per = std::max<int64_t>(1, budget / std::max<int64_t>(1, rows * plane));
  return std::min(per, depth);
}

}  // namespace detail

// Forward convolution. x: (N, Cin, D, H, W); w: (Cout, Cin, k, k, k); bias may be null.
template <class T>
Tensor<T> conv3d_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias, const ConvGeom& g) {
  const Shape xs = x.shape;
  const int64_t cout = w.shape.n, cin = w.shape.c, k3 = int64_t{g.kernel} * g.kernel * g.kernel;
  if (xs.c != cin) throw UsageError("conv3d: input has " + std::to_string(xs.c) + " channels, weight expects " +
                                    std::to_string(cin));
  const detail::Extent in{xs.d, xs.h, xs.w};
  const detail::Extent out{g.out_len(xs.d), g.out_len(xs.h), g.out_len(xs.w)};
  if (out.d < 1 || out.h < 1 || out.w < 1) throw UsageError("conv3d: input " + xs.str() + " too small for kernel");
  Tensor<T> y({xs.n, cout, out.d, out.h, out.w});
  const int64_t rows = cin * k3, plane = out.h * out.w, per = detail::planes_per_block(rows, plane, out.d);
  AlignedVector<T> cols(static_cast<size_t>(rows * per * plane));
  const detail::CMapMat<T> wm(w.ptr(), cout, rows);
  for (int64_t n = 0; n < xs.n; ++n)
    for (int64_t z0 = 0; z0 < out.d; z0 += per) {
      const int64_t z1 = std::min(out.d, z0 + per), pn = (z1 - z0) * plane;
      detail::im2col(x.channel(n, 0), cin, in, out, g, z0, z1, cols.data());
      const detail::CMapMat<T> cm(cols.data(), rows, pn);
      detail::StridedMap<T> ym(y.channel(n, 0) + z0 * plane, cout, pn, Eigen::OuterStride<>(out.count()));
      ym.noalias() = wm * cm;
      if (bias)
        for (int64_t co = 0; co < cout; ++co) ym.row(co).array() += bias[co];
    }
  return y;
}

// Gradients of conv3d_forward. Any output pointer may be null to skip that term.
template <class T>
void conv3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, const ConvGeom& g, Tensor<T>* dx,
                     Tensor<T>* dw, T* dbias) {
  const Shape xs = x.shape;
  const int64_t cout = w.shape.n, cin = w.shape.c, k3 = int64_t{g.kernel} * g.kernel * g.kernel;
  const detail::Extent in{xs.d, xs.h, xs.w};
  const detail::Extent out{dy.shape.d, dy.shape.h, dy.shape.w};
  const int64_t rows = cin * k3, plane = out.h * out.w, per = detail::planes_per_block(rows, plane, out.d);
  AlignedVector<T> cols(static_cast<size_t>(rows * per * plane));
  const detail::CMapMat<T> wm(w.ptr(), cout, rows);
  for (int64_t n = 0; n < xs.n; ++n)
    for (int64_t z0 = 0; z0 < out.d; z0 += per) {
      const int64_t z1 = std::min(out.d, z0 + per), pn = (z1 - z0) * plane;
      const detail::CStridedMap<T> gm(dy.channel(n, 0) + z0 * plane, cout, pn, Eigen::OuterStride<>(out.count()));
      if (dbias)
        for (int64_t co = 0; co < cout; ++co) dbias[co] += gm.row(co).sum();
      if (dw) {
        detail::im2col(x.channel(n, 0), cin, in, out, g, z0, z1, cols.data());
        const detail::CMapMat<T> cm(cols.data(), rows, pn);
        detail::MapMat<T> dwm(dw->ptr(), cout, rows);
        dwm.noalias() += gm * cm.transpose();
      }
      if (dx) {
        detail::MapMat<T> cm(cols.data(), rows, pn);
        cm.noalias() = wm.transpose() * gm;
        detail::col2im(cols.data(), cin, in, out, g, z0, z1, dx->channel(n, 0));
      }
    }
}

// Transposed convolution. x: (N, Cin, D, H, W); w: (Cin, Cout, k, k, k).
// Output extent per axis is g.in_len(n), i.e. the adjoint of conv3d_forward.
template <class T>
Tensor<T> conv_transpose3d_forward(const Tensor<T>& x, const Tensor<T>& w, const T* bias, const ConvGeom& g) {
  const Shape xs = x.shape;
  const int64_t cin = w.shape.n, cout = w.shape.c, k3 = int64_t{g.kernel} * g.kernel * g.kernel;
  if (xs.c != cin) throw UsageError("conv_transpose3d: channel mismatch");
  const detail::Extent small{xs.d, xs.h, xs.w};
  const detail::Extent big{g.in_len(xs.d), g.in_len(xs.h), g.in_len(xs.w)};
  Tensor<T> y({xs.n, cout, big.d, big.h, big.w});
  const int64_t rows = cout * k3, plane = small.h * small.w, per = detail::planes_per_block(rows, plane, small.d);
  AlignedVector<T> cols(static_cast<size_t>(rows * per * plane));
  const detail::CMapMat<T> wm(w.ptr(), cin, rows);
  for (int64_t n = 0; n < xs.n; ++n) {
    for (int64_t z0 = 0; z0 < small.d; z0 += per) {
      const int64_t z1 = std::min(small.d, z0 + per), pn = (z1 - z0) * plane;
      const detail::CStridedMap<T> xm(x.channel(n, 0) + z0 * plane, cin, pn, Eigen::OuterStride<>(small.count()));
      detail::MapMat<T> cm(cols.data(), rows, pn);
      cm.noalias() = wm.transpose() * xm;
      detail::col2im(cols.data(), cout, big, small, g, z0, z1, y.channel(n, 0));
    }
    if (bias)
      for (int64_t co = 0; co < cout; ++co) {
        T* p = y.channel(n, co);
        for (int64_t i = 0; i < big.count(); ++i) p[i] += bias[co];
      }
  }
  return y;
}

template <class T>
void conv_transpose3d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, const ConvGeom& g,
                               Tensor<T>* dx, Tensor<T>* dw, T* dbias) {
  const Shape xs = x.shape;
  const int64_t cin = w.shape.n, cout = w.shape.c, k3 = int64_t{g.kernel} * g.kernel * g.kernel;
  const detail::Extent small{xs.d, xs.h, xs.w};
  const detail::Extent big{dy.shape.d, dy.shape.h, dy.shape.w};
  const int64_t rows = cout * k3, plane = small.h * small.w, per = detail::planes_per_block(rows, plane, small.d);
  AlignedVector<T> cols(static_cast<size_t>(rows * per * plane));
  const detail::CMapMat<T> wm(w.ptr(), cin, rows);
  for (int64_t n = 0; n < xs.n; ++n) {
    if (dbias)
      for (int64_t co = 0; co < cout; ++co) {
        const T* p = dy.channel(n, co);
        T acc = 0;
        for (int64_t i = 0; i < big.count(); ++i) acc += p[i];
        dbias[co] += acc;
      }
    if (!dx && !dw) continue;
    for (int64_t z0 = 0; z0 < small.d; z0 += per) {
      const int64_t z1 = std::min(small.d, z0 + per), pn = (z1 - z0) * plane;
      detail::im2col(dy.channel(n, 0), cout, big, small, g, z0, z1, cols.data());
      const detail::CMapMat<T> cm(cols.data(), rows, pn);
      if (dx) {
        detail::StridedMap<T> dxm(dx->channel(n, 0) + z0 * plane, cin, pn, Eigen::OuterStride<>(small.count()));
        dxm.noalias() += wm * cm;
      }
      if (dw) {
        const detail::CStridedMap<T> xm(x.channel(n, 0) + z0 * plane, cin, pn, Eigen::OuterStride<>(small.count()));
        detail::MapMat<T> dwm(dw->ptr(), cin, rows);
        dwm.noalias() += xm * cm.transpose();
      }
    }
  }
}

}  // namespace vts::nn
