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

// Command-line entry point: phantom, degrade, train, infer and eval.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vts/checkpoint.hpp"
#include "vts/degrader.hpp"
#include "vts/error.hpp"
#include "vts/evalkit.hpp"
#include "vts/inference.hpp"
#include "vts/manifest.hpp"
#include "vts/phantom.hpp"
#include "vts/training.hpp"
#include "vts/version.hpp"
#include "vts/vvol.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vts {
namespace {

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json provenance(uint64_t seed, const std::string& command) {
  return {{"tool_version", std::string(kToolVersion)}, {"seed", seed}, {"command", command}};
}

void log_counts(const Manifest& m) {
  std::cerr << "manifest " << m.source.string() << ": " << m.entries.size() << " entries";
  for (const auto& [part, n] : m.body_part_counts()) std::cerr << ' ' << part << '=' << n;
  std::cerr << '\n';
}

Dims parse_dims(const std::string& s) {
  std::vector<int64_t> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      size_t used = 0;
      v.push_back(std::stoll(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("--dims expects Z,Y,X integers, got '" + s + "'");
    }
  }
  if (v.size() != 3) throw UsageError("--dims expects Z,Y,X, got '" + s + "'");
  return {v[0], v[1], v[2]};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(tok);
  return out;
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
  int count = 1;
  std::string part = "all";
  std::string dims = "64,64,64";
  int test_count = 0;
  std::string out;
};

void cmd_phantom(const PhantomArgs& a, uint64_t seed) {
  if (a.count < 1) throw UsageError("--count must be at least 1");
  if (a.test_count < 0 || a.test_count > a.count) throw UsageError("--test-count must lie in [0, --count]");
  const Dims dims = parse_dims(a.dims);
  const fs::path dir = a.out;
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < a.count; ++i) {
    PhantomSpec s;
    s.dims = dims;
    s.seed = seed + static_cast<uint64_t>(i);
    s.body_part = a.part == "all" ? kAllBodyParts[static_cast<size_t>(i) % 4] : body_part_from_string(a.part);
    const Volume v = generate_phantom(s);
    char name[64];
    std::snprintf(name, sizeof name, "phantom_%03d_%s.vvol", i, to_string(s.body_part).c_str());
    json prov = provenance(seed, "phantom");
    prov["phantom_seed"] = s.seed;
    write_vvol(dir / name, v, SampleType::kInt16, prov);
    entries.push_back({name, dir / name, s.body_part, i >= a.count - a.test_count ? Split::kTest : Split::kTrain});
  }
  write_json(dir / "manifest.json", manifest_json(entries));
  std::cerr << "wrote " << a.count << " phantoms and " << (dir / "manifest.json").string() << '\n';
}

// ---------------------------------------------------------------------------

struct DegradeArgs {
  std::string in, out;
  int factor = 4;
  double sigma = 0.0;
  double noise = 0.0;
  bool slices_only = false;
};

void cmd_degrade(const DegradeArgs& a, uint64_t seed) {
  if (a.factor != 4 && a.factor != 8) throw UsageError("--factor must be 4 or 8");
  const Volume src = read_vvol(a.in);
  Volume thin = src.domain() == ValueDomain::kHU ? normalize_hu(src) : src;
  if (thin.spacing() != Spacing{1, 1, 1}) thin = resample_isotropic(thin, 1.0);
  DegradeParams p;
  p.factor = a.factor;
  p.sigma_vox = a.sigma;
  p.noise_std = a.noise;
  std::mt19937_64 rng(seed);
  Volume out = degrade(thin, p, rng);
  if (a.slices_only) out = subsample_z(out, a.factor);
  if (src.domain() == ValueDomain::kHU) out = denormalize(out);
  json prov = provenance(seed, "degrade");
  prov["input"] = a.in;
  prov["degrade"] = {{"factor", a.factor}, {"sigma_vox", a.sigma}, {"noise_std", a.noise}, {"slices_only", a.slices_only}};
  write_vvol(a.out, out, std::nullopt, prov);
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, resume;
};

void cmd_train(const TrainArgs& a, std::optional<uint64_t> seed) {
  TrainConfig cfg;
  try {
    cfg = detail::read_json_file(a.config).get<TrainConfig>();
  } catch (const json::exception& e) {
    throw DataError(a.config + ": " + e.what());
  }
  if (seed) cfg.seed = *seed;
  cfg.validate();
  const Manifest m = load_manifest(a.data);
  log_counts(m);
  auto volumes = load_split(m, Split::kTrain);
  const fs::path rundir = a.out;
  fs::create_directories(rundir);
  write_json(rundir / "config.json", json(cfg));
  json prov = provenance(cfg.seed, "train");
  prov["manifest"] = a.data;
  prov["manifest_sha1"] = git_blob_sha1(a.data);
  prov["train_volumes"] = volumes.size();
  prov["workers"] = cfg.workers > 0 ? cfg.workers : worker_count_from_env();
  write_json(rundir / "provenance.json", prov);

  std::optional<fs::path> resume;
  if (!a.resume.empty()) {
    resume = a.resume;
    prov["resumed_from"] = a.resume;
    prov["resumed_from_sha1"] = git_blob_sha1(a.resume);
  }
  const auto result = train_loop(cfg, std::move(volumes), rundir, resume, [](const LossReport& r) {
    if (r.step % 50 == 0)
      std::cerr << "step " << r.step << " loss_d " << r.loss_d << " loss_g_adv " << r.loss_g_adv << " loss_g_l1 "
                << r.loss_g_l1 << '\n';
  });
  json hashes = json::object();
  for (const auto& p : result.checkpoints) hashes[p.filename().string()] = git_blob_sha1(p);
  if (fs::exists(rundir / "model.ckpt")) hashes["model.ckpt"] = git_blob_sha1(rundir / "model.ckpt");
  prov["checkpoint_sha1"] = hashes;
  prov["steps"] = result.reports.empty() ? 0 : result.reports.back().step;
  write_json(rundir / "provenance.json", prov);
}

// ---------------------------------------------------------------------------

struct InferArgs {
  std::string in, ckpt, out, margin = "auto";
  int64_t tile = 160;
  double memory_cap_mb = 4096;
};

void cmd_infer(const InferArgs& a) {
  TileOptions t;
  t.tile = a.tile;
  t.memory_cap_mb = a.memory_cap_mb;
  if (a.margin != "auto") {
    try {
      size_t used = 0;
      t.margin = std::stoll(a.margin, &used);
      if (used != a.margin.size()) throw std::invalid_argument(a.margin);
    } catch (const std::exception&) {
      throw UsageError("--margin expects an integer or 'auto', got '" + a.margin + "'");
    }
  }
  const json prov = run_inference({a.in, a.ckpt, a.out, t});
  std::cerr << "wrote " << a.out << " (tile " << prov.at("tile") << ", margin " << prov.at("margin") << ")\n";
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data, methods = "tricubic,srcnn,pix2pix,vts,vts-nocond,vts-nohf", ckpt_dir, out;
  int factor = 4;
  std::optional<double> sigma;
  double noise = 0.005;
  int64_t tile = 0;
  bool no_montage = false;
};

void cmd_eval(const EvalArgs& a, uint64_t seed) {
  const Manifest m = load_manifest(a.data);
  log_counts(m);
  std::vector<EvalCase> cases;
  for (const auto& e : m.split(Split::kTest))
    cases.push_back({e.resolved.stem().string(), load_training_volume(e.resolved), e.body_part});
  if (cases.empty()) throw DataError(a.data + ": no test-split entries to evaluate");
  EvalOptions opt;
  opt.methods = split_list(a.methods);
  opt.ckpt_dir = a.ckpt_dir;
  opt.out_dir = a.out;
  opt.degrade.factor = a.factor;
  opt.degrade.sigma_vox = a.sigma;
  opt.degrade.noise_std = a.noise;
  opt.degrade.seed = seed;
  opt.montages = !a.no_montage;
  if (a.tile > 0) opt.tiles = TileOptions{.tile = a.tile};
  const EvalReport rep = run_eval(cases, opt);
  write_json(fs::path(a.out) / "config.json", {{"data", a.data},
                                               {"methods", opt.methods},
                                               {"ckpt_dir", a.ckpt_dir},
                                               {"degrade", opt.degrade},
                                               {"tile", a.tile},
                                               {"seed", seed}});
  json prov = provenance(seed, "eval");
  prov["manifest_sha1"] = git_blob_sha1(a.data);
  json hashes = json::object();
  for (const auto& mth : opt.methods)
    if (is_learned_method(mth)) hashes[mth] = git_blob_sha1(checkpoint_for(opt.ckpt_dir, mth));
  prov["checkpoint_sha1"] = hashes;
  write_json(fs::path(a.out) / "provenance.json", prov);
  for (const auto& r : rep.records)
    std::cout << r.method << '\t' << format_metric(r.psnr_db) << '\t' << format_metric(r.ssim) << '\t' << r.n_volumes
              << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"Virtual thin slice reconstruction toolkit", "vts"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<uint64_t> seed;
  app.add_option("--seed", seed, "Root seed for degradation, initialization and data order (default 0)");

  PhantomArgs pa;
  auto* ph = app.add_subcommand("phantom", "Generate synthetic CT phantoms and a manifest");
  ph->add_option("--count", pa.count, "Number of phantoms")->capture_default_str();
  ph->add_option("--part", pa.part, "head, chest, abdomen, leg or all (cycled)")->capture_default_str();
  ph->add_option("--dims", pa.dims, "Z,Y,X voxel counts")->capture_default_str();
  ph->add_option("--test-count", pa.test_count, "Assign the last N phantoms to the test split")->capture_default_str();
  ph->add_option("--out", pa.out, "Output directory")->required();

  DegradeArgs da;
  auto* dg = app.add_subcommand("degrade", "Simulate a thick-slice acquisition of a thin volume");
  dg->add_option("--in", da.in, "Input thin vvol")->required();
  dg->add_option("--out", da.out, "Output vvol")->required();
  dg->add_option("--factor", da.factor, "Slice interval in voxels (4 or 8)")->capture_default_str();
  dg->add_option("--sigma", da.sigma, "Slab profile sigma in voxels")->capture_default_str();
  dg->add_option("--noise", da.noise, "Noise standard deviation in normalized units")->capture_default_str();
  dg->add_flag("--slices-only", da.slices_only, "Write only the retained slices at the thick spacing");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a reconstruction model");
  tr->add_option("--config", ta.config, "Training config JSON")->required();
  tr->add_option("--data", ta.data, "Dataset manifest JSON")->required();
  tr->add_option("--out", ta.out, "Run directory")->required();
  tr->add_option("--resume", ta.resume, "Checkpoint to resume from");

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Reconstruct a 1 mm volume from a thick-slice scan");
  inf->add_option("--in", ia.in, "Thick-slice vvol")->required();
  inf->add_option("--ckpt", ia.ckpt, "Model checkpoint")->required();
  inf->add_option("--out", ia.out, "Output vvol")->required();
  inf->add_option("--tile", ia.tile, "Tile core edge in voxels")->capture_default_str();
  inf->add_option("--margin", ia.margin, "Context margin in voxels or 'auto'")->capture_default_str();
  inf->add_option("--memory-cap-mb", ia.memory_cap_mb, "Reject tiles whose estimated footprint exceeds this")
      ->capture_default_str();

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Compare reconstruction methods on the test split");
  ev->add_option("--data", ea.data, "Dataset manifest JSON")->required();
  ev->add_option("--methods", ea.methods, "Comma-separated methods")->capture_default_str();
  ev->add_option("--ckpt-dir", ea.ckpt_dir, "Directory holding <method>.ckpt or <method>/model.ckpt");
  ev->add_option("--out", ea.out, "Report directory")->required();
  ev->add_option("--factor", ea.factor, "Slice interval of the simulated input")->capture_default_str();
  ev->add_option("--sigma", ea.sigma, "Slab profile sigma in voxels (default: FWHM equals the interval)");
  ev->add_option("--noise", ea.noise, "Noise standard deviation in normalized units")->capture_default_str();
  ev->add_option("--tile", ea.tile, "Use tiled inference with this tile edge (0: whole volume)")->capture_default_str();
  ev->add_flag("--no-montage", ea.no_montage, "Skip PNG montages");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0 && !app.get_subcommands().empty()) std::cerr << app.get_subcommands().front()->help();
    if (code != 0 && app.get_subcommands().empty()) std::cerr << app.help();
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  const uint64_t s = seed.value_or(0);
  if (ph->parsed()) cmd_phantom(pa, s);
  if (dg->parsed()) cmd_degrade(da, s);
  if (tr->parsed()) cmd_train(ta, seed);
  if (inf->parsed()) cmd_infer(ia);
  if (ev->parsed()) cmd_eval(ea, s);
  return 0;
}

}  // namespace
}  // namespace vts

int main(int argc, char** argv) {
  using vts::ExitCode;
  try {
    return vts::run(argc, argv);
  } catch (const vts::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  } catch (const vts::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const vts::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumeric);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
}
