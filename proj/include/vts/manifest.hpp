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

// Dataset manifests: {"entries": [{"path", "body_part", "split"}]} with paths
// resolved relative to the manifest file.

#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vts/body_part.hpp"
#include "vts/degrader.hpp"
#include "vts/error.hpp"
#include "vts/volume.hpp"
#include "vts/vvol.hpp"

namespace vts {

enum class Split { kTrain, kVal, kTest };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split split_from_string(std::string_view s) {
  for (Split v : {Split::kTrain, Split::kVal, Split::kTest})
    if (s == to_string(v)) return v;
  throw DataError("unknown split '" + std::string(s) + "' (expected train, val or test)");
}

struct ManifestEntry {
  std::filesystem::path path;  // as written in the manifest
  std::filesystem::path resolved;
  BodyPart body_part = BodyPart::kHead;
  Split split = Split::kTrain;
};

struct Manifest {
  std::filesystem::path source;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split(Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(e);
    return out;
  }

  std::map<std::string, int> body_part_counts(std::optional<Split> s = std::nullopt) const {
    std::map<std::string, int> out;
    for (BodyPart p : kAllBodyParts) out[to_string(p)] = 0;
    for (const auto& e : entries)
      if (!s || e.split == *s) ++out[to_string(e.body_part)];
    return out;
  }
};

inline Manifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base,
                               const std::filesystem::path& source = {}) {
  Manifest m;
  m.source = source;
  const std::string where = source.empty() ? "manifest" : source.string();
  if (!j.is_object() || !j.contains("entries") || !j.at("entries").is_array())
    throw DataError(where + ": expected an object with an \"entries\" array");
  std::map<std::filesystem::path, Split> seen;
  for (const auto& e : j.at("entries")) {
    if (!e.is_object()) throw DataError(where + ": each entry must be an object");
    for (const char* key : {"path", "body_part", "split"})
      if (!e.contains(key) || !e.at(key).is_string())
        throw DataError(where + ": entry missing string field '" + key + "'");
    ManifestEntry me;
    me.path = e.at("path").get<std::string>();
    me.resolved = me.path.is_absolute() ? me.path : base / me.path;
    me.body_part = body_part_from_string(e.at("body_part").get<std::string>());
    me.split = split_from_string(e.at("split").get<std::string>());
    if (!std::filesystem::exists(me.resolved)) throw DataError(where + ": missing file " + me.resolved.string());
    const auto key = std::filesystem::weakly_canonical(me.resolved);
    if (auto it = seen.find(key); it != seen.end() && it->second != me.split)
      throw DataError(where + ": " + me.path.string() + " appears in both " + to_string(it->second) + " and " +
                      to_string(me.split) + " splits");
    seen[key] = me.split;
    m.entries.push_back(std::move(me));
  }
  if (m.entries.empty()) throw DataError(where + ": empty manifest");
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("manifest not found: " + path.string());
  return parse_manifest(detail::read_json_file(path), path.parent_path(), path);
}

inline nlohmann::json manifest_json(const std::vector<ManifestEntry>& entries) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : entries)
    arr.push_back({{"path", e.path.generic_string()}, {"body_part", to_string(e.body_part)}, {"split", to_string(e.split)}});
  return {{"entries", arr}};
}

// Loads a volume as normalized 1 mm isotropic data.
inline Volume load_training_volume(const std::filesystem::path& path) {
  Volume v = read_vvol(path);
  if (v.domain() == ValueDomain::kHU) v = normalize_hu(v);
  const Spacing s = v.spacing();
  if (s.z != 1.0 || s.y != 1.0 || s.x != 1.0) v = resample_isotropic(v, 1.0);
  return v;
}

inline std::vector<LabeledVolume> load_split(const Manifest& m, Split s) {
  std::vector<LabeledVolume> out;
  for (const auto& e : m.split(s)) out.push_back({load_training_volume(e.resolved), e.body_part});
  return out;
}

}  // namespace vts
