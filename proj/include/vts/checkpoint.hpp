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

// Checkpoint container: "VTSCKPT1", u64 header length, JSON header, then
// little-endian float32 payloads at the offsets listed in the header.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "vts/error.hpp"
#include "vts/nn/tensor.hpp"

namespace vts {

inline constexpr char kCheckpointMagic[8] = {'V', 'T', 'S', 'C', 'K', 'P', 'T', '1'};

struct Checkpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;

  const nn::Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
  const nn::Tensor<float>& at(const std::string& name) const {
    if (const auto* t = find(name)) return *t;
    throw DataError("checkpoint has no tensor '" + name + "'");
  }
};

namespace detail {

inline uint32_t to_le(uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}
inline uint64_t to_le64(uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

inline nlohmann::json shape_json(const nn::Shape& s) { return {s.n, s.c, s.d, s.h, s.w}; }
inline nn::Shape shape_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 5) throw DataError("checkpoint tensor shape must have 5 entries");
  return {j[0].get<int64_t>(), j[1].get<int64_t>(), j[2].get<int64_t>(), j[3].get<int64_t>(), j[4].get<int64_t>()};
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                            const std::vector<std::pair<std::string, const nn::Tensor<float>*>>& tensors) {
  nlohmann::json table = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    table.push_back({{"name", name}, {"shape", detail::shape_json(t->shape)}, {"offset", offset}, {"count", t->size()}});
    offset += static_cast<uint64_t>(t->size()) * 4;
  }
  header["tensors"] = table;
  const std::string text = header.dump();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint " + path.string());
    f.write(kCheckpointMagic, 8);
    const uint64_t len = detail::to_le64(text.size());
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::vector<uint32_t> buf;
    for (const auto& [name, t] : tensors) {
      buf.resize(static_cast<size_t>(t->size()));
      for (size_t i = 0; i < buf.size(); ++i) buf[i] = detail::to_le(std::bit_cast<uint32_t>(t->data[i]));
      f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!f) throw DataError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError(path.string() + " is not a VTSCKPT1 checkpoint");
  uint64_t len = 0;
  if (!f.read(reinterpret_cast<char*>(&len), 8)) throw DataError("truncated checkpoint " + path.string());
  len = detail::to_le64(len);
  if (len > (uint64_t{1} << 30)) throw DataError("implausible checkpoint header length in " + path.string());
  std::string text(len, '\0');
  if (!f.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("truncated checkpoint " + path.string());
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  const auto payload = static_cast<std::streamoff>(16 + len);
  std::vector<uint32_t> buf;
  for (const auto& e : ck.header.at("tensors")) {
    nn::Tensor<float> t(detail::shape_from_json(e.at("shape")));
    if (e.at("count").get<int64_t>() != t.size()) throw DataError("checkpoint tensor count/shape mismatch");
    f.seekg(payload + e.at("offset").get<std::streamoff>());
    buf.resize(static_cast<size_t>(t.size()));
    if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4)))
      throw DataError("truncated checkpoint payload in " + path.string());
    for (size_t i = 0; i < buf.size(); ++i) t.data[i] = std::bit_cast<float>(detail::to_le(buf[i]));
    ck.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  ck.header.erase("tensors");
  return ck;
}

// Git blob hash: SHA-1 over "blob <size>\0" followed by the file bytes.
inline std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string prefix = "blob " + std::to_string(data.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, prefix.data(), prefix.size());
  EVP_DigestUpdate(ctx, data.data(), data.size());
  EVP_DigestFinal_ex(ctx, md, &n);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < n; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return os.str();
}

}  // namespace vts
