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

// "vvol" volume files: a raw little-endian sample array in z-major order
// (x fastest) plus a JSON sidecar at <path>.json:
//
//   { "dims": [z, y, x], "spacing_mm": [z, y, x],
//     "dtype": "int16" | "float32", "value_domain": "HU" | "NORMALIZED",
//     "provenance": { ... optional ... } }

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vts/error.hpp"
#include "vts/volume.hpp"

namespace vts {

enum class SampleType { kInt16, kFloat32 };

inline std::string to_string(SampleType t) { return t == SampleType::kInt16 ? "int16" : "float32"; }

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  return std::filesystem::path(p.string() + ".json");
}

namespace detail {

template <class T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

inline nlohmann::json read_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

}  // namespace detail

inline SampleType default_sample_type(ValueDomain d) {
  return d == ValueDomain::kHU ? SampleType::kInt16 : SampleType::kFloat32;
}

// Writes raw samples and the sidecar. int16 output rounds half to even.
inline void write_vvol(const std::filesystem::path& path, const Volume& vol,
                       std::optional<SampleType> type = std::nullopt,
                       const nlohmann::json& provenance = nullptr) {
  const SampleType t = type.value_or(default_sample_type(vol.domain()));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const auto src = vol.data();
  if (t == SampleType::kInt16) {
    std::vector<int16_t> buf(src.size());
    for (size_t i = 0; i < src.size(); ++i) {
      const float r = std::nearbyint(std::clamp(src[i], -32768.0f, 32767.0f));
      buf[i] = detail::to_little_endian(static_cast<int16_t>(r));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 2));
  } else {
    std::vector<float> buf(src.begin(), src.end());
    for (float& v : buf) v = detail::to_little_endian(v);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  }
  if (!out) throw DataError("write failed for " + path.string());

  const Dims d = vol.dims();
  const Spacing s = vol.spacing();
  nlohmann::json side = {{"dims", {d.z, d.y, d.x}},
                         {"spacing_mm", {s.z, s.y, s.x}},
                         {"dtype", to_string(t)},
                         {"value_domain", to_string(vol.domain())}};
  if (!provenance.is_null()) side["provenance"] = provenance;
  std::ofstream js(sidecar_path(path));
  if (!js) throw DataError("cannot write sidecar for " + path.string());
  js << side.dump(2) << '\n';
}

inline nlohmann::json read_vvol_sidecar(const std::filesystem::path& path) {
  const auto sp = sidecar_path(path);
  if (!std::filesystem::exists(sp)) throw DataError("missing sidecar " + sp.string());
  return detail::read_json_file(sp);
}

inline Volume read_vvol(const std::filesystem::path& path) {
  const nlohmann::json side = read_vvol_sidecar(path);
  for (const char* key : {"dims", "spacing_mm", "dtype", "value_domain"})
    if (!side.contains(key)) throw DataError(path.string() + ".json: missing key '" + key + "'");
  Dims d;
  Spacing s;
  SampleType t;
  ValueDomain dom;
  try {
    const auto dims = side.at("dims").get<std::vector<int64_t>>();
    const auto sp = side.at("spacing_mm").get<std::vector<double>>();
    if (dims.size() != 3 || sp.size() != 3) throw DataError("dims and spacing_mm must have 3 entries");
    d = {dims[0], dims[1], dims[2]};
    s = {sp[0], sp[1], sp[2]};
    const auto dt = side.at("dtype").get<std::string>();
    if (dt == "int16")
      t = SampleType::kInt16;
    else if (dt == "float32")
      t = SampleType::kFloat32;
    else
      throw DataError("unsupported dtype '" + dt + "'");
    dom = value_domain_from_string(side.at("value_domain").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ".json: " + e.what());
  }
  if (d.z < 1 || d.y < 1 || d.x < 1) throw DataError(path.string() + ": dims must be positive");

  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const auto n = static_cast<size_t>(d.count());
  const size_t bytes = n * (t == SampleType::kInt16 ? 2 : 4);
  if (std::filesystem::file_size(path) != bytes)
    throw DataError(path.string() + ": size " + std::to_string(std::filesystem::file_size(path)) +
                    " bytes, expected " + std::to_string(bytes));
  std::vector<float> data(n);
  if (t == SampleType::kInt16) {
    std::vector<int16_t> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    for (size_t i = 0; i < n; ++i) data[i] = static_cast<float>(detail::to_little_endian(buf[i]));
  } else {
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    for (float& v : data) v = detail::to_little_endian(v);
  }
  if (!in) throw DataError("short read on " + path.string());
  return Volume(d, s, dom, std::move(data));
}

}  // namespace vts
