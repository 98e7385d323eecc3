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

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vts/error.hpp"

namespace vts::nn {

// Channels-first 5D shape: batch, channels, depth (z), height (y), width (x).
struct Shape {
  int64_t n = 1, c = 1, d = 1, h = 1, w = 1;

  int64_t count() const { return n * c * d * h * w; }
  int64_t spatial() const { return d * h * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(d) + ", " + std::to_string(h) +
           ", " + std::to_string(w) + ")";
  }
};

// Storage aligned to Eigen's maximum vector width.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <class T>
struct Tensor {
  Shape shape;
  AlignedVector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(s), data(static_cast<size_t>(s.count()), fill) {}
  Tensor(Shape s, const std::vector<T>& values) : shape(s), data(values.begin(), values.end()) {
    if (static_cast<int64_t>(data.size()) != s.count()) throw UsageError("tensor data does not match shape " + s.str());
  }

  bool empty() const { return data.empty(); }
  int64_t size() const { return static_cast<int64_t>(data.size()); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  // Pointer to the (n, c) channel block.
  T* channel(int64_t n, int64_t c) { return data.data() + (n * shape.c + c) * shape.spatial(); }
  const T* channel(int64_t n, int64_t c) const { return data.data() + (n * shape.c + c) * shape.spatial(); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

}  // namespace vts::nn
