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

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "vts/checkpoint.hpp"
#include "vts/manifest.hpp"
#include "vts/version.hpp"

namespace vts {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::scratch_dir;

struct CliRun {
  int code = -1;
  std::string output;
};

CliRun vts_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(VTS_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.output.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

TEST(Cli, UnknownSubcommandPrintsUsage) {
  const CliRun r = vts_cli("bogus");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("Usage"), std::string::npos) << r.output;
  EXPECT_EQ(vts_cli("").code, 1);
  EXPECT_EQ(vts_cli("--help").code, 0);
}

TEST(Cli, MissingRequiredFlagIsNamed) {
  const CliRun r = vts_cli("infer --in a.vvol --out b.vvol");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.output.find("--ckpt"), std::string::npos) << r.output;
}

TEST(Cli, UnknownFlagRejected) {
  EXPECT_EQ(vts_cli("phantom --out /tmp/x --bogus 1").code, 1);
  EXPECT_EQ(vts_cli("degrade --in a --out b --factor 5").code, 1);
}

TEST(Manifest, CountsPerBodyPart) {
  const auto dir = scratch_dir("manifest_counts");
  json j{{"entries", json::array()}};
  for (const char* part : {"head", "chest", "abdomen", "leg"}) {
    write_text(dir / (std::string(part) + ".vvol"), "");
    j["entries"].push_back({{"path", std::string(part) + ".vvol"}, {"body_part", part}, {"split", "train"}});
  }
  write_text(dir / "m.json", j.dump());
  const Manifest m = load_manifest(dir / "m.json");
  EXPECT_EQ(m.body_part_counts(), (std::map<std::string, int>{{"head", 1}, {"chest", 1}, {"abdomen", 1}, {"leg", 1}}));
  EXPECT_EQ(m.entries[2].resolved, dir / "abdomen.vvol");
}

TEST(Manifest, InvalidManifestsAreDataErrors) {
  const auto dir = scratch_dir("manifest_bad");
  write_text(dir / "a.vvol", "");
  auto entry = [](const std::string& path, const std::string& part, const std::string& split) {
    return json{{"path", path}, {"body_part", part}, {"split", split}};
  };
  const std::vector<std::pair<std::string, std::string>> bad = {
      {"holdout", json{{"entries", {entry("a.vvol", "head", "holdout")}}}.dump()},
      {"empty manifest", json{{"entries", json::array()}}.dump()},
      {"body_part", json{{"entries", {entry("a.vvol", "torso", "train")}}}.dump()},
      {"missing file", json{{"entries", {entry("nope.vvol", "head", "train")}}}.dump()},
      {"both", json{{"entries", {entry("a.vvol", "head", "train"), entry("a.vvol", "head", "test")}}}.dump()},
      {"malformed", "{\"entries\": [ }"}};
  for (const auto& [needle, text] : bad) {
    write_text(dir / "m.json", text);
    try {
      load_manifest(dir / "m.json");
      ADD_FAILURE() << "accepted manifest: " << text;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
    const CliRun r = vts_cli("eval --data " + (dir / "m.json").string() + " --out " + (dir / "rep").string());
    EXPECT_EQ(r.code, 2) << text << "\n" << r.output;
  }
  EXPECT_THROW(load_manifest(dir / "absent.json"), DataError);
}

TEST(Cli, PhantomTrainInferEvalRoundTrip) {
  const auto dir = scratch_dir("cli_roundtrip");
  const std::string d = dir.string();
  CliRun r = vts_cli("phantom --count 4 --dims 32,32,32 --test-count 1 --seed 7 --out " + d + "/ph");
  ASSERT_EQ(r.code, 0) << r.output;
  const Manifest m = load_manifest(dir / "ph" / "manifest.json");
  EXPECT_EQ(m.split(Split::kTest).size(), 1u);
  EXPECT_EQ(m.body_part_counts(Split::kTrain).at("head"), 1);

  r = vts_cli("degrade --seed 3 --factor 4 --sigma 1 --noise 0.01 --slices-only --in " + d +
              "/ph/phantom_000_head.vvol --out " + d + "/thick.vvol");
  ASSERT_EQ(r.code, 0) << r.output;
  ASSERT_EQ(vts_cli("degrade --seed 3 --factor 4 --sigma 1 --noise 0.01 --slices-only --in " + d +
                    "/ph/phantom_000_head.vvol --out " + d + "/thick2.vvol")
                .code,
            0);
  EXPECT_EQ(slurp(dir / "thick.vvol"), slurp(dir / "thick2.vvol"));
  EXPECT_EQ(read_vvol(dir / "thick.vvol").dims(), (Dims{8, 32, 32}));

  write_text(dir / "c.json", R"({"model": "vts", "patch": 32, "epochs": 1, "max_steps": 2,
    "generator": {"base_channels": 2, "levels": 2},
    "discriminator": {"base_channels": 2, "levels": 3, "attention_layer": 2}})");
  r = vts_cli("train --config " + d + "/c.json --data " + d + "/ph/manifest.json --out " + d + "/run --seed 4",
              "VTS_NUM_WORKERS=2");
  ASSERT_EQ(r.code, 0) << r.output;
  const json cfg = read_json(dir / "run" / "config.json");
  EXPECT_EQ(cfg.at("seed"), 4);
  EXPECT_EQ(cfg.at("patch"), 32);
  const json prov = read_json(dir / "run" / "provenance.json");
  EXPECT_EQ(prov.at("tool_version"), kToolVersion);
  EXPECT_EQ(prov.at("workers"), 2);
  EXPECT_EQ(prov.at("steps"), 2);
  EXPECT_EQ(prov.at("checkpoint_sha1").at("model.ckpt"), git_blob_sha1(dir / "run" / "model.ckpt"));

  r = vts_cli("infer --seed 1 --tile 32 --in " + d + "/thick.vvol --ckpt " + d + "/run/model.ckpt --out " + d +
              "/thin.vvol");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(read_vvol(dir / "thin.vvol").dims(), (Dims{29, 32, 32}));
  EXPECT_EQ(vts_cli("infer --tile 32 --margin 8 --in " + d + "/thick.vvol --ckpt " + d + "/run/model.ckpt --out " +
                    d + "/x.vvol")
                .code,
            1);
  EXPECT_EQ(vts_cli("infer --in " + d + "/absent.vvol --ckpt " + d + "/run/model.ckpt --out " + d + "/x.vvol").code,
            2);

  fs::create_directories(dir / "ck");
  fs::copy_file(dir / "run" / "model.ckpt", dir / "ck" / "vts.ckpt");
  r = vts_cli("eval --seed 2 --methods spline,vts,gt --data " + d + "/ph/manifest.json --ckpt-dir " + d + "/ck --out " +
              d + "/rep");
  ASSERT_EQ(r.code, 0) << r.output;
  std::ifstream csv(dir / "rep" / "metrics.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "method,psnr_db,ssim,n_volumes");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 3);
  EXPECT_TRUE(fs::exists(dir / "rep" / "config.json"));
  EXPECT_EQ(read_json(dir / "rep" / "provenance.json").at("checkpoint_sha1").at("vts"),
            git_blob_sha1(dir / "ck" / "vts.ckpt"));
  EXPECT_EQ(vts_cli("eval --methods srcnn --data " + d + "/ph/manifest.json --ckpt-dir " + d + "/ck --out " + d +
                    "/rep2")
                .code,
            2);
}

TEST(Cli, NonFiniteTrainingExitsWithNumericCode) {
  const auto dir = scratch_dir("cli_numeric");
  const std::string d = dir.string();
  ASSERT_EQ(vts_cli("phantom --count 2 --dims 32,32,32 --out " + d + "/ph").code, 0);
  write_text(dir / "c.json", R"({"model": "vts", "patch": 32, "epochs": 1, "max_steps": 2, "lr": 1e30,
    "generator": {"base_channels": 2, "levels": 2},
    "discriminator": {"base_channels": 2, "levels": 3, "attention_layer": 2}})");
  const CliRun r = vts_cli("train --config " + d + "/c.json --data " + d + "/ph/manifest.json --out " + d + "/run");
  EXPECT_EQ(r.code, 3) << r.output;
  write_text(dir / "u.json", R"({"model": "vts", "learning_rate": 1})");
  EXPECT_EQ(vts_cli("train --config " + d + "/u.json --data " + d + "/ph/manifest.json --out " + d + "/run2").code, 1);
}

}  // namespace
}  // namespace vts
