// Copyright (c) 2026 The lensalign authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lensalign/common.hpp"
#include "lensalign/io.hpp"
#include "lensalign/optics.hpp"
#include "lensalign/serde.hpp"
#include "lensalign/types.hpp"

namespace lensalign {

// Unit-to-unit assembly tolerance model: per-axis decenter shift in
// U(-5, 5) um and blur-response gains in U(0.8, 1.2).
constexpr double kToleranceShiftMaxUm = 5.0;
constexpr double kToleranceGainLo = 0.8;
constexpr double kToleranceGainHi = 1.2;

// Lens id blocks. Training ids (source/pseudo-target share lenses, plus the
// unlabeled target module) never collide with evaluation ids.
constexpr int kTargetLensIdBase = 1000;
constexpr int kTestLensIdBase = 2000;
constexpr int kOracleLensIdBase = 3000;

// Seed-domain tags keeping the lens-parameter, per-sample and target-command
// RNG streams disjoint under one dataset seed.
constexpr std::uint64_t kSeedTagLens = 0x7;
constexpr std::uint64_t kSeedTagSample = 0xB;
constexpr std::uint64_t kSeedTagTargetCmds = 0xC;

enum class Role { source, pseudo_target, target_unlabeled, test, oracle };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::source: return "source";
    case Role::pseudo_target: return "pseudo_target";
    case Role::target_unlabeled: return "target_unlabeled";
    case Role::test: return "test";
    case Role::oracle: return "oracle";
  }
  throw InvalidInputError("unknown role");
}

inline Role role_from_string(const std::string& s) {
  if (s == "source") return Role::source;
  if (s == "pseudo_target") return Role::pseudo_target;
  if (s == "target_unlabeled") return Role::target_unlabeled;
  if (s == "test") return Role::test;
  if (s == "oracle") return Role::oracle;
  throw SchemaError("unknown dataset role: " + s);
}

inline bool role_is_labeled(Role r) { return r != Role::target_unlabeled; }

/// Grid geometry (range_um, step_um) for labeled sets; n_random for the
/// unlabeled target collection.
struct SamplingSpec {
  double range_um = 30.0;
  double step_um = 2.0;
  int n_random = 0;

  /// Half-width of the grid in steps; validates divisibility.
  int grid_halfwidth() const {
    if (!(range_um > 0.0) || !(step_um > 0.0))
      throw InvalidConfigError("sampling: range_um and step_um must be positive");
    const double k = range_um / step_um;
    const double kr = std::round(k);
    if (kr < 1.0 || std::abs(k - kr) > 1e-9 * std::max(1.0, k))
      throw InvalidConfigError(
          "sampling: range_um must be a positive integer multiple of step_um");
    return static_cast<int>(kr);
  }
  int grid_side() const { return 2 * grid_halfwidth() + 1; }
  int grid_count() const { return grid_side() * grid_side(); }
};

inline json to_json(const SamplingSpec& s) {
  return {{"range_um", s.range_um},
          {"step_um", s.step_um},
          {"n_random", s.n_random}};
}
inline SamplingSpec sampling_from_json(const json& j) {
  SamplingSpec s;
  s.range_um = j.at("range_um").get<double>();
  s.step_um = j.at("step_um").get<double>();
  s.n_random = j.at("n_random").get<int>();
  return s;
}

/// Full labeled scan grid, row-major: dy outer ascending, dx inner ascending.
/// Positions are exact multiples of step_um.
inline std::vector<MisalignmentOffset> grid_positions(double range_um,
                                                      double step_um) {
  SamplingSpec s{range_um, step_um, 0};
  const int k = s.grid_halfwidth();
  std::vector<MisalignmentOffset> out;
  out.reserve(static_cast<std::size_t>(s.grid_count()));
  for (int iy = -k; iy <= k; ++iy)
    for (int ix = -k; ix <= k; ++ix)
      out.push_back({ix * step_um, iy * step_um});
  return out;
}

struct Sample {
  int sample_id = 0;
  std::optional<MisalignmentOffset> label;  // absent for unlabeled data
  std::uint64_t rng_seed = 0;
  FovImageSet images;
};

struct LensRecord {
  LensInstance lens;
  /// Machine-coordinate origin found by pre-alignment; labels are offsets
  /// relative to this origin. Absent when no pre-alignment was performed.
  std::optional<MisalignmentOffset> calib_origin;
  std::vector<Sample> samples;
};

/// Ground-truth record for one unlabeled target capture, written to a sealed
/// sidecar for post-hoc analysis only; the loader never reads it back.
struct AuditRecord {
  int lens_id = 0;
  int sample_id = 0;
  MisalignmentOffset commanded;
  MisalignmentOffset effective;
};

struct Dataset {
  Role role = Role::source;
  DomainConfig domain;
  SamplingSpec sampling;
  std::uint64_t dataset_seed = 0;
  std::vector<LensRecord> lenses;
  /// Populated only while building an unlabeled target set; saved to the
  /// sidecar and intentionally left empty by load_dataset().
  std::vector<AuditRecord> audit;

  bool labeled() const { return role_is_labeled(role); }

  std::size_t total_samples() const {
    std::size_t n = 0;
    for (const auto& l : lenses) n += l.samples.size();
    return n;
  }

  void validate() const {
    domain.validate();
    if (lenses.empty()) throw InvalidInputError("dataset: no lenses");
    for (const auto& lr : lenses) {
      for (const auto& s : lr.samples) {
        s.images.validate();
        if (s.images.fovs[0].side != domain.image_side)
          throw InvalidInputError("dataset: image side mismatch");
        if (labeled()) {
          if (!s.label)
            throw InvalidInputError("dataset: labeled role with missing label");
          if (!s.label->finite())
            throw InvalidInputError("dataset: non-finite label");
        } else if (s.label) {
          throw InvalidInputError("dataset: unlabeled role carries a label");
        }
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Builders.

inline LensInstance sample_tolerance_lens(int lens_id,
                                          std::uint64_t dataset_seed) {
  Rng r(stable_seed(dataset_seed, kSeedTagLens,
                    static_cast<std::uint64_t>(lens_id)));
  LensInstance l;
  l.lens_id = lens_id;
  l.tolerance_shift = {r.uniform(-kToleranceShiftMaxUm, kToleranceShiftMaxUm),
                       r.uniform(-kToleranceShiftMaxUm, kToleranceShiftMaxUm)};
  l.gain_parallel = r.uniform(kToleranceGainLo, kToleranceGainHi);
  l.gain_perp = r.uniform(kToleranceGainLo, kToleranceGainHi);
  l.coma_gain = r.uniform(kToleranceGainLo, kToleranceGainHi);
  l.rng_seed = r.next_u64();
  return l;
}

/// Locate the machine command that maximizes capture sharpness for one lens
/// by scanning a square grid (center +- scan_range at scan_step spacing) and
/// ranking total gradient energy over the five field images. The scan renders
/// with jitter, noise and quantization disabled so it is fully deterministic.
/// Ties prefer the smaller |command|, then scan order. A zero scan_range
/// degenerates to the single center point.
inline MisalignmentOffset prealign_scan(const LensInstance& lens,
                                        const DomainConfig& domain,
                                        double scan_range, double scan_step,
                                        MisalignmentOffset center = {0.0, 0.0}) {
  if (scan_range < 0.0 || (scan_range > 0.0 && scan_step <= 0.0))
    throw InvalidConfigError("prealign: bad scan geometry");
  DomainConfig quiet = domain;
  quiet.isp.noise_sigma = 0.0;
  quiet.isp.scale_lo = quiet.isp.scale_hi = 1.0;
  const double g = quiet.isp.nominal_gamma();
  quiet.isp.gamma_lo = quiet.isp.gamma_hi = g;
  quiet.isp.quantize_bits = 0;

  const int k = scan_range > 0.0
                    ? static_cast<int>(std::round(scan_range / scan_step))
                    : 0;
  MisalignmentOffset best = center;
  double best_sharp = -1.0;
  double best_norm = 0.0;
  for (int iy = -k; iy <= k; ++iy) {
    for (int ix = -k; ix <= k; ++ix) {
      const MisalignmentOffset cand{center.dx_um + ix * scan_step,
                                    center.dy_um + iy * scan_step};
      const FovImageSet cap = simulate_capture(cand, lens, quiet, 0);
      double sharp = 0.0;
      for (const auto& im : cap.fovs) sharp += gradient_energy(im);
      const double cn = cand.norm();
      if (sharp > best_sharp ||
          (sharp == best_sharp && cn < best_norm)) {
        best_sharp = sharp;
        best = cand;
        best_norm = cn;
      }
    }
  }
  return best;
}

/// Coarse-then-fine sharpness search covering the whole tolerance range.
/// Final origin error is bounded by half the fine step per axis.
inline MisalignmentOffset calibrate_origin(const LensInstance& lens,
                                           const DomainConfig& domain) {
  const MisalignmentOffset coarse =
      prealign_scan(lens, domain, kToleranceShiftMaxUm + 1.0, 1.5);
  return prealign_scan(lens, domain, 1.0, 0.25, coarse);
}

namespace detail {

inline void render_grid_samples(LensRecord& lr, const DomainConfig& domain,
                                const std::vector<MisalignmentOffset>& grid,
                                const MisalignmentOffset& origin,
                                std::uint64_t dataset_seed, int workers) {
  lr.samples.resize(grid.size());
  const int lens_id = lr.lens.lens_id;
  parallel_for(static_cast<std::int64_t>(grid.size()), workers,
               [&](std::int64_t i) {
                 const auto idx = static_cast<std::size_t>(i);
                 const MisalignmentOffset label = grid[idx];
                 const std::uint64_t seed = stable_seed(
                     dataset_seed, kSeedTagSample,
                     static_cast<std::uint64_t>(lens_id),
                     static_cast<std::uint64_t>(i));
                 Sample s;
                 s.sample_id = static_cast<int>(i);
                 s.label = label;
                 s.rng_seed = seed;
                 s.images = simulate_capture(origin + label, lr.lens, domain, seed);
                 lr.samples[idx] = std::move(s);
               });
}

}  // namespace detail

/// Labeled source scan set: the ideal reference lens plus m tolerance-drawn
/// units, each swept over the full grid. Every unit is pre-aligned before its
/// sweep, so the label always equals the effective decenter; unit diversity
/// enters through the blur-response gains and the second-lobe gain.
inline Dataset build_source_dataset(const DomainConfig& domain, int m,
                                    const SamplingSpec& sampling,
                                    std::uint64_t dataset_seed,
                                    int workers = 1) {
  if (m < 0) throw InvalidConfigError("source: m must be >= 0");
  domain.validate();
  const auto grid = grid_positions(sampling.range_um, sampling.step_um);

  Dataset ds;
  ds.role = Role::source;
  ds.domain = domain;
  ds.sampling = sampling;
  ds.sampling.n_random = 0;
  ds.dataset_seed = dataset_seed;
  ds.lenses.resize(static_cast<std::size_t>(m) + 1);
  for (int lens_idx = 0; lens_idx <= m; ++lens_idx) {
    LensRecord& lr = ds.lenses[static_cast<std::size_t>(lens_idx)];
    lr.lens = lens_idx == 0 ? LensInstance::ideal(0)
                            : sample_tolerance_lens(lens_idx, dataset_seed);
    // Exact simulated pre-alignment: command out the unit's own shift.
    const MisalignmentOffset origin = -lr.lens.tolerance_shift;
    lr.calib_origin = origin;
    detail::render_grid_samples(lr, domain, grid, origin, dataset_seed,
                                workers);
  }
  ds.validate();
  return ds;
}

/// Unlabeled captures from one new (target-domain) module at uniformly random
/// machine commands. No pre-alignment is performed: the unit's tolerance
/// shift stays folded into every capture, unknown to the training side. The
/// true effective decenters go only into the sealed audit list.
inline Dataset build_target_dataset(const DomainConfig& domain,
                                    const SamplingSpec& sampling,
                                    std::uint64_t dataset_seed,
                                    int workers = 1) {
  domain.validate();
  const int n_grid = sampling.grid_count();
  if (sampling.n_random < 1)
    throw InvalidConfigError("target: n_random must be >= 1");
  if (4 * sampling.n_random > n_grid)
    throw InvalidConfigError(
        "target: n_random must be at most a quarter of the grid size (" +
        std::to_string(n_grid / 4) + ")");

  Dataset ds;
  ds.role = Role::target_unlabeled;
  ds.domain = domain;
  ds.sampling = sampling;
  ds.dataset_seed = dataset_seed;
  ds.lenses.resize(1);
  LensRecord& lr = ds.lenses[0];
  lr.lens = sample_tolerance_lens(kTargetLensIdBase, dataset_seed);

  Rng r(stable_seed(dataset_seed, kSeedTagTargetCmds));
  std::vector<MisalignmentOffset> commands;
  commands.reserve(static_cast<std::size_t>(sampling.n_random));
  for (int i = 0; i < sampling.n_random; ++i) {
    const double dx = r.uniform(-sampling.range_um, sampling.range_um);
    const double dy = r.uniform(-sampling.range_um, sampling.range_um);
    commands.push_back({dx, dy});
  }

  lr.samples.resize(commands.size());
  parallel_for(static_cast<std::int64_t>(commands.size()), workers,
               [&](std::int64_t i) {
                 const auto idx = static_cast<std::size_t>(i);
                 const std::uint64_t seed = stable_seed(
                     dataset_seed, kSeedTagSample,
                     static_cast<std::uint64_t>(lr.lens.lens_id),
                     static_cast<std::uint64_t>(i));
                 Sample s;
                 s.sample_id = static_cast<int>(i);
                 s.rng_seed = seed;
                 s.images = simulate_capture(commands[idx], lr.lens, domain, seed);
                 lr.samples[idx] = std::move(s);
               });
  for (int i = 0; i < sampling.n_random; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    ds.audit.push_back({lr.lens.lens_id, i, commands[idx],
                        commands[idx] + lr.lens.tolerance_shift});
  }
  ds.validate();
  return ds;
}

/// Dense labeled grids on fresh tolerance-drawn units for testing (and a few
/// oracle units for supervised baselines). Each unit is pre-aligned by the
/// sharpness scan; labels are machine offsets from the found origin.
inline std::pair<Dataset, Dataset> build_eval_datasets(
    const DomainConfig& domain, int n_test, int n_oracle,
    const SamplingSpec& sampling, std::uint64_t dataset_seed,
    int workers = 1) {
  if (n_test < 1 || n_oracle < 1)
    throw InvalidConfigError("eval: need at least one test and one oracle lens");
  domain.validate();
  const auto grid = grid_positions(sampling.range_um, sampling.step_um);

  auto build = [&](Role role, int base_id, int count) {
    Dataset ds;
    ds.role = role;
    ds.domain = domain;
    ds.sampling = sampling;
    ds.sampling.n_random = 0;
    ds.dataset_seed = dataset_seed;
    ds.lenses.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      LensRecord& lr = ds.lenses[static_cast<std::size_t>(i)];
      lr.lens = sample_tolerance_lens(base_id + i, dataset_seed);
      lr.calib_origin = calibrate_origin(lr.lens, domain);
      detail::render_grid_samples(lr, domain, grid, *lr.calib_origin,
                                  dataset_seed, workers);
    }
    ds.validate();
    return ds;
  };

  return {build(Role::test, kTestLensIdBase, n_test),
          build(Role::oracle, kOracleLensIdBase, n_oracle)};
}

/// Keep only samples whose label lies on the coarser grid with spacing
/// factor * step. Models the cheap sparse-scan data collection mode.
inline Dataset sparsify_grid_dataset(const Dataset& ds, int factor) {
  if (factor < 2) throw InvalidConfigError("sparsify: factor must be >= 2");
  if (!ds.labeled())
    throw InvalidInputError("sparsify: dataset must be labeled");
  const double coarse = ds.sampling.step_um * factor;
  Dataset out;
  out.role = ds.role;
  out.domain = ds.domain;
  out.dataset_seed = ds.dataset_seed;
  out.sampling = ds.sampling;
  out.sampling.step_um = coarse;
  const int new_k = ds.sampling.grid_halfwidth() / factor;
  out.sampling.range_um = new_k * coarse;
  if (new_k < 1)
    throw InvalidConfigError("sparsify: factor leaves no off-center samples");
  auto on_coarse = [&](double v) {
    const double q = v / coarse;
    return std::abs(q - std::round(q)) < 1e-9;
  };
  for (const auto& lr : ds.lenses) {
    LensRecord nlr;
    nlr.lens = lr.lens;
    nlr.calib_origin = lr.calib_origin;
    for (const auto& s : lr.samples)
      if (on_coarse(s.label->dx_um) && on_coarse(s.label->dy_um))
        nlr.samples.push_back(s);
    out.lenses.push_back(std::move(nlr));
  }
  return out;
}

/// First n lenses of a labeled dataset (used for the n-unit baselines).
inline Dataset subset_lenses(const Dataset& ds, int n) {
  if (n < 1 || static_cast<std::size_t>(n) > ds.lenses.size())
    throw InvalidInputError("subset_lenses: bad count");
  Dataset out = ds;
  out.lenses.resize(static_cast<std::size_t>(n));
  return out;
}

// ---------------------------------------------------------------------------
// Persistence.
//
// Layout under <root>/:
//   manifest.json                     written last; carries both hashes
//   lens_<id>/samples.jsonl           one record per sample
//   lens_<id>/images/<sid>_fov<i>.png 8-bit grayscale
//   audit/labels.jsonl                target sets only; sealed ground truth
//
// content_hash covers the training-visible bytes (every samples.jsonl and
// PNG, in traversal order); the audit sidecar is deliberately excluded.
// config_hash covers {role, domain, sampling, dataset_seed} and makes
// regeneration idempotence checkable without touching pixel data.

struct Manifest {
  json doc;
  std::string config_hash;
  std::string content_hash;
};

inline std::string dataset_config_hash(Role role, const DomainConfig& domain,
                                       const SamplingSpec& sampling,
                                       std::uint64_t dataset_seed) {
  json j{{"role", to_string(role)},
         {"domain", to_json(domain)},
         {"sampling", to_json(sampling)},
         {"dataset_seed", dataset_seed}};
  return fnv1a_hex(j.dump());
}

namespace detail {

inline std::string sample_jsonl_line(const Sample& s,
                                     const MisalignmentOffset& commanded) {
  json rec{{"sample_id", s.sample_id},
           {"rng_seed", s.rng_seed},
           {"cmd_dx_um", commanded.dx_um},
           {"cmd_dy_um", commanded.dy_um}};
  if (s.label) {
    rec["dx_um"] = s.label->dx_um;
    rec["dy_um"] = s.label->dy_um;
  }
  json files = json::array();
  for (std::size_t i = 0; i < s.images.fovs.size(); ++i)
    files.push_back("images/" + std::to_string(s.sample_id) + "_fov" +
                    std::to_string(i) + ".png");
  rec["fov_files"] = files;
  return rec.dump();
}

}  // namespace detail

inline Manifest save_dataset(const Dataset& ds,
                             const std::filesystem::path& root) {
  ds.validate();
  namespace fs = std::filesystem;
  fs::create_directories(root);

  Hasher content;
  json lens_meta = json::array();
  json lens_ids = json::array();
  for (const auto& lr : ds.lenses) {
    const fs::path lens_dir =
        root / ("lens_" + std::to_string(lr.lens.lens_id));
    fs::create_directories(lens_dir / "images");

    std::ostringstream jsonl;
    for (const auto& s : lr.samples) {
      jsonl << detail::sample_jsonl_line(s, s.images.offset) << "\n";
      for (std::size_t i = 0; i < s.images.fovs.size(); ++i) {
        const auto png = encode_png(s.images.fovs[i]);
        content.update(png.data(), png.size());
        write_bytes(lens_dir / "images" /
                        (std::to_string(s.sample_id) + "_fov" +
                         std::to_string(i) + ".png"),
                    png.data(), png.size());
      }
    }
    const std::string jsonl_str = jsonl.str();
    content.update(jsonl_str);
    write_text(lens_dir / "samples.jsonl", jsonl_str);

    json meta = to_json(lr.lens);
    meta["n_samples"] = lr.samples.size();
    if (lr.calib_origin) meta["calib_origin"] = to_json(*lr.calib_origin);
    lens_meta.push_back(std::move(meta));
    lens_ids.push_back(lr.lens.lens_id);
  }

  if (!ds.audit.empty()) {
    fs::create_directories(root / "audit");
    std::ostringstream audit;
    for (const auto& a : ds.audit) {
      audit << json{{"lens_id", a.lens_id},
                    {"sample_id", a.sample_id},
                    {"commanded_dx_um", a.commanded.dx_um},
                    {"commanded_dy_um", a.commanded.dy_um},
                    {"effective_dx_um", a.effective.dx_um},
                    {"effective_dy_um", a.effective.dy_um}}
                   .dump()
            << "\n";
    }
    write_text(root / "audit" / "labels.jsonl", audit.str());
  }

  Manifest m;
  m.config_hash =
      dataset_config_hash(ds.role, ds.domain, ds.sampling, ds.dataset_seed);
  m.content_hash = content.hex();
  m.doc = json{{"schema_version", 1},
               {"role", to_string(ds.role)},
               {"dataset_seed", ds.dataset_seed},
               {"config_hash", m.config_hash},
               {"content_hash", m.content_hash},
               {"lens_ids", lens_ids},
               {"lenses", lens_meta},
               {"domain", to_json(ds.domain)},
               {"sampling", to_json(ds.sampling)}};
  write_text(root / "manifest.json", m.doc.dump(2) + "\n");
  return m;
}

inline Dataset load_dataset(const std::filesystem::path& root,
                            bool verify_content = true) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = root / "manifest.json";
  if (!fs::exists(manifest_path))
    throw MissingFileError("dataset manifest not found: " +
                           manifest_path.string());
  json doc;
  try {
    doc = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw SchemaError("manifest is not valid JSON: " + std::string(e.what()));
  }

  Dataset ds;
  try {
    const int ver = doc.at("schema_version").get<int>();
    if (ver != 1)
      throw SchemaError("unsupported dataset schema_version: " +
                        std::to_string(ver));
    ds.role = role_from_string(doc.at("role").get<std::string>());
    ds.dataset_seed = doc.at("dataset_seed").get<std::uint64_t>();
    ds.domain = domain_from_json(doc.at("domain"));
    ds.sampling = sampling_from_json(doc.at("sampling"));

    Hasher content;
    for (const auto& meta : doc.at("lenses")) {
      LensRecord lr;
      lr.lens = lens_from_json(meta);
      if (meta.contains("calib_origin"))
        lr.calib_origin = offset_from_json(meta.at("calib_origin"));
      const fs::path lens_dir =
          root / ("lens_" + std::to_string(lr.lens.lens_id));
      const fs::path jsonl_path = lens_dir / "samples.jsonl";
      if (!fs::exists(jsonl_path))
        throw MissingFileError("dataset file not found: " +
                               jsonl_path.string());

      // PNG bytes are hashed in write order (images of each record first,
      // then the jsonl), matching save_dataset.
      const std::string jsonl = read_text(jsonl_path);
      std::istringstream lines(jsonl);
      std::string line;
      while (std::getline(lines, line)) {
        if (line.empty()) continue;
        json rec;
        try {
          rec = json::parse(line);
        } catch (const json::exception& e) {
          throw SchemaError("bad sample record in " + jsonl_path.string() +
                            ": " + std::string(e.what()));
        }
        Sample s;
        s.sample_id = rec.at("sample_id").get<int>();
        s.rng_seed = rec.at("rng_seed").get<std::uint64_t>();
        const bool has_dx = rec.contains("dx_um");
        const bool has_dy = rec.contains("dy_um");
        if (has_dx != has_dy)
          throw SchemaError("sample with half a label in " +
                            jsonl_path.string());
        if (ds.labeled() && !has_dx)
          throw SchemaError("labeled dataset is missing dx_um/dy_um in " +
                            jsonl_path.string());
        if (!ds.labeled() && has_dx)
          throw SchemaError("unlabeled dataset carries labels in " +
                            jsonl_path.string());
        if (has_dx)
          s.label = MisalignmentOffset{rec.at("dx_um").get<double>(),
                                       rec.at("dy_um").get<double>()};
        s.images.offset = {rec.at("cmd_dx_um").get<double>(),
                           rec.at("cmd_dy_um").get<double>()};
        s.images.lens_id = lr.lens.lens_id;
        s.images.rng_seed = s.rng_seed;
        const auto& files = rec.at("fov_files");
        if (!files.is_array() || files.size() != 5)
          throw SchemaError("fov_files must list exactly 5 images in " +
                            jsonl_path.string());
        for (const auto& f : files) {
          const fs::path img_path = lens_dir / f.get<std::string>();
          if (!fs::exists(img_path))
            throw MissingFileError("dataset image not found: " +
                                   img_path.string());
          const auto bytes = read_bytes(img_path);
          content.update(bytes.data(), bytes.size());
          s.images.fovs.push_back(decode_png(bytes));
        }
        lr.samples.push_back(std::move(s));
      }
      content.update(jsonl);
      const std::size_t expect = meta.at("n_samples").get<std::size_t>();
      if (lr.samples.size() != expect)
        throw SchemaError("sample count mismatch for lens " +
                          std::to_string(lr.lens.lens_id));
      ds.lenses.push_back(std::move(lr));
    }

    if (verify_content) {
      const std::string expect = doc.at("content_hash").get<std::string>();
      if (content.hex() != expect)
        throw ChecksumError("dataset content hash mismatch under " +
                            root.string());
    }
  } catch (const json::exception& e) {
    throw SchemaError("manifest field error: " + std::string(e.what()));
  }
  ds.validate();
  return ds;
}

/// Ground-truth audit records for an unlabeled target set. Lives here for
/// reporting only; nothing on the training path calls this.
inline std::vector<AuditRecord> load_target_audit(
    const std::filesystem::path& root) {
  const auto path = root / "audit" / "labels.jsonl";
  if (!std::filesystem::exists(path))
    throw MissingFileError("audit sidecar not found: " + path.string());
  std::vector<AuditRecord> out;
  std::istringstream lines(read_text(path));
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError("bad audit record: " + std::string(e.what()));
    }
    out.push_back({rec.at("lens_id").get<int>(),
                   rec.at("sample_id").get<int>(),
                   {rec.at("commanded_dx_um").get<double>(),
                    rec.at("commanded_dy_um").get<double>()},
                   {rec.at("effective_dx_um").get<double>(),
                    rec.at("effective_dy_um").get<double>()}});
  }
  return out;
}

}  // namespace lensalign
