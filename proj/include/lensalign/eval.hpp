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

#include <array>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lensalign/aligner.hpp"
#include "lensalign/common.hpp"
#include "lensalign/dataset.hpp"
#include "lensalign/transform.hpp"

namespace lensalign {

// ---------------------------------------------------------------------------
// Accuracy report. Error conventions, used consistently everywhere below:
//   per-axis error      e_x = |pred.dx - label.dx|   (same for y)
//   per-sample error    a   = (e_x + e_y) / 2
//   mae_x / mae_y       mean of e_x / e_y over all samples
//   mae_avg             (mae_x + mae_y) / 2, equal to mean of a
//   sd_*                population standard deviation of the absolute errors
//                       behind the matching mae_* (not of signed errors)
// per_position_errors and per_lens_mae aggregate the per-sample error a.

/// Map key for one grid position, ordered row-major: (dy_um, dx_um).
using PositionKey = std::pair<double, double>;

struct EvalReport {
  double mae_x = 0.0;
  double mae_y = 0.0;
  double mae_avg = 0.0;
  double sd_x = 0.0;
  double sd_y = 0.0;
  double sd_avg = 0.0;
  /// Mean per-sample error at each labeled position, over all lenses.
  std::map<PositionKey, double> per_position_errors;
  /// Mean per-sample error for each lens, over its samples.
  std::map<int, double> per_lens_mae;
  int n_samples = 0;
};

namespace detail {

/// Population standard deviation (not sample-corrected), fixed-order
/// double accumulation.
inline double population_sd(const std::vector<double>& xs, double mean) {
  if (xs.empty()) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

inline double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x;
  return xs.empty() ? 0.0 : acc / static_cast<double>(xs.size());
}

}  // namespace detail

/// Assemble the report from per-sample predictions listed in flatten_samples
/// order (lens by lens, sample by sample). The dataset supplies labels, lens
/// ids and positions; images are not touched.
inline EvalReport evaluate_from_predictions(
    const Dataset& test, const std::vector<MisalignmentOffset>& preds) {
  if (!test.labeled())
    throw InvalidInputError("evaluate: dataset must be labeled");
  const auto pool = flatten_samples(test);
  if (pool.empty()) throw InvalidInputError("evaluate: empty dataset");
  if (preds.size() != pool.size())
    throw InvalidInputError("evaluate: prediction count mismatch");

  std::vector<double> ex, ey, ea;
  ex.reserve(pool.size());
  ey.reserve(pool.size());
  ea.reserve(pool.size());
  std::map<PositionKey, std::pair<double, int>> pos_acc;
  std::map<int, std::pair<double, int>> lens_acc;

  std::size_t i = 0;
  for (const auto& lr : test.lenses) {
    for (const auto& s : lr.samples) {
      const MisalignmentOffset& p = preds[i++];
      if (!p.finite())
        throw InvalidInputError("evaluate: non-finite prediction");
      const double dx = std::abs(p.dx_um - s.label->dx_um);
      const double dy = std::abs(p.dy_um - s.label->dy_um);
      const double a = 0.5 * (dx + dy);
      ex.push_back(dx);
      ey.push_back(dy);
      ea.push_back(a);
      auto& pa = pos_acc[{s.label->dy_um, s.label->dx_um}];
      pa.first += a;
      pa.second += 1;
      auto& la = lens_acc[lr.lens.lens_id];
      la.first += a;
      la.second += 1;
    }
  }

  EvalReport rep;
  rep.n_samples = static_cast<int>(pool.size());
  rep.mae_x = detail::mean_of(ex);
  rep.mae_y = detail::mean_of(ey);
  rep.mae_avg = 0.5 * (rep.mae_x + rep.mae_y);
  rep.sd_x = detail::population_sd(ex, rep.mae_x);
  rep.sd_y = detail::population_sd(ey, rep.mae_y);
  rep.sd_avg = detail::population_sd(ea, detail::mean_of(ea));
  for (const auto& [k, v] : pos_acc)
    rep.per_position_errors[k] = v.first / v.second;
  for (const auto& [k, v] : lens_acc) rep.per_lens_mae[k] = v.first / v.second;
  return rep;
}

/// Evaluate an arbitrary predictor callable (const Sample&) ->
/// MisalignmentOffset. Stubs may read the stored label; real predictors
/// should look only at sample.images.
template <class Predictor>
EvalReport evaluate_with(Predictor&& predict, const Dataset& test) {
  if (!test.labeled())
    throw InvalidInputError("evaluate: dataset must be labeled");
  const auto pool = flatten_samples(test);
  if (pool.empty()) throw InvalidInputError("evaluate: empty dataset");
  std::vector<MisalignmentOffset> preds;
  preds.reserve(pool.size());
  for (const Sample* s : pool) preds.push_back(predict(*s));
  return evaluate_from_predictions(test, preds);
}

/// Evaluate a trained regressor on a labeled set, batching captures through
/// the network in eval mode.
template <class S>
EvalReport evaluate(AlignerModelT<S>& model, const Dataset& test,
                    int batch_size = 16) {
  if (!test.labeled())
    throw InvalidInputError("evaluate: dataset must be labeled");
  const auto pool = flatten_samples(test);
  if (pool.empty()) throw InvalidInputError("evaluate: empty dataset");
  return evaluate_from_predictions(test,
                                   predict_batch(model, pool, batch_size));
}

// ---------------------------------------------------------------------------
// Report serialization (report.json, per_lens.csv, metrics.csv).

inline json to_json(const EvalReport& r) {
  json positions = json::array();
  for (const auto& [k, v] : r.per_position_errors)
    positions.push_back(
        {{"dx_um", k.second}, {"dy_um", k.first}, {"mae_um", v}});
  json lenses = json::object();
  for (const auto& [id, v] : r.per_lens_mae)
    lenses[std::to_string(id)] = v;
  return {{"mae_x", r.mae_x},
          {"mae_y", r.mae_y},
          {"mae_avg", r.mae_avg},
          {"sd_x", r.sd_x},
          {"sd_y", r.sd_y},
          {"sd_avg", r.sd_avg},
          {"n_samples", r.n_samples},
          {"sd_definition", "population_sd_of_absolute_errors"},
          {"per_position_errors", positions},
          {"per_lens_mae", lenses}};
}

inline EvalReport eval_report_from_json(const json& j) {
  EvalReport r;
  try {
    r.mae_x = j.at("mae_x").get<double>();
    r.mae_y = j.at("mae_y").get<double>();
    r.mae_avg = j.at("mae_avg").get<double>();
    r.sd_x = j.at("sd_x").get<double>();
    r.sd_y = j.at("sd_y").get<double>();
    r.sd_avg = j.at("sd_avg").get<double>();
    r.n_samples = j.at("n_samples").get<int>();
    for (const auto& p : j.at("per_position_errors"))
      r.per_position_errors[{p.at("dy_um").get<double>(),
                             p.at("dx_um").get<double>()}] =
          p.at("mae_um").get<double>();
    for (const auto& [key, v] : j.at("per_lens_mae").items())
      r.per_lens_mae[std::stoi(key)] = v.get<double>();
  } catch (const json::exception& e) {
    throw SchemaError("report field error: " + std::string(e.what()));
  }
  return r;
}

namespace detail {

inline std::string csv_num(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace detail

inline void write_report_json(const EvalReport& r,
                              const std::filesystem::path& path) {
  write_text(path, to_json(r).dump(2) + "\n");
}

inline EvalReport read_report_json(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw MissingFileError("report not found: " + path.string());
  try {
    return eval_report_from_json(json::parse(read_text(path)));
  } catch (const json::exception& e) {
    throw SchemaError("report is not valid JSON: " + std::string(e.what()));
  }
}

inline void write_per_lens_csv(const EvalReport& r,
                               const std::filesystem::path& path) {
  std::ostringstream os;
  os << "lens_id,mae_um\n";
  for (const auto& [id, v] : r.per_lens_mae)
    os << id << "," << detail::csv_num(v) << "\n";
  write_text(path, os.str());
}

/// Table-style summary, one row per named pipeline.
inline void write_metrics_csv(
    const std::vector<std::pair<std::string, EvalReport>>& rows,
    const std::filesystem::path& path) {
  std::ostringstream os;
  os << "name,mae_x,sd_x,mae_y,sd_y,mae_avg,sd_avg\n";
  for (const auto& [name, r] : rows)
    os << name << "," << detail::csv_num(r.mae_x) << ","
       << detail::csv_num(r.sd_x) << "," << detail::csv_num(r.mae_y) << ","
       << detail::csv_num(r.sd_y) << "," << detail::csv_num(r.mae_avg) << ","
       << detail::csv_num(r.sd_avg) << "\n";
  write_text(path, os.str());
}

// ---------------------------------------------------------------------------
// Error heatmap over the scan grid.

struct Heatmap {
  double range_um = 0.0;
  double step_um = 0.0;
  int side = 0;
  /// Row-major, dy ascending in rows, dx ascending in columns.
  std::vector<double> values;

  double at(int iy, int ix) const {
    return values[static_cast<std::size_t>(iy) *
                      static_cast<std::size_t>(side) +
                  static_cast<std::size_t>(ix)];
  }
};

/// Arrange per-position errors on the sampling grid. Every grid cell must be
/// present in the report and the report must not carry off-grid positions.
inline Heatmap error_heatmap(const EvalReport& rep,
                             const SamplingSpec& sampling) {
  const auto grid = grid_positions(sampling.range_um, sampling.step_um);
  if (rep.per_position_errors.size() != grid.size())
    throw InvalidInputError(
        "heatmap: report positions do not match the sampling grid");
  Heatmap hm;
  hm.range_um = sampling.range_um;
  hm.step_um = sampling.step_um;
  hm.side = sampling.grid_side();
  hm.values.reserve(grid.size());
  for (const auto& pos : grid) {
    const auto it = rep.per_position_errors.find({pos.dy_um, pos.dx_um});
    if (it == rep.per_position_errors.end())
      throw InvalidInputError(
          "heatmap: report positions do not match the sampling grid");
    hm.values.push_back(it->second);
  }
  return hm;
}

inline void write_heatmap_csv(const Heatmap& hm,
                              const std::filesystem::path& path) {
  std::ostringstream os;
  os << "dx_um,dy_um,mae_um\n";
  const int k = (hm.side - 1) / 2;
  for (int iy = -k; iy <= k; ++iy)
    for (int ix = -k; ix <= k; ++ix)
      os << detail::csv_num(ix * hm.step_um) << ","
         << detail::csv_num(iy * hm.step_um) << ","
         << detail::csv_num(hm.at(iy + k, ix + k)) << "\n";
  write_text(path, os.str());
}

/// 8-bit grayscale rendering, brighter = larger error, normalized to the
/// maximum cell (all black when every cell is zero).
inline void write_heatmap_png(const Heatmap& hm,
                              const std::filesystem::path& path) {
  double top = 0.0;
  for (double v : hm.values) top = std::max(top, v);
  Image im(hm.side);
  for (std::size_t i = 0; i < hm.values.size(); ++i)
    im.px[i] = top > 0.0 ? static_cast<float>(hm.values[i] / top) : 0.0f;
  const auto png = encode_png(im);
  write_bytes(path, png.data(), png.size());
}

/// Mean cell value over the radial band lo_frac..hi_frac of the normalized
/// grid radius (cell |offset| divided by the corner norm range*sqrt(2)).
/// Bounds are inclusive; used to compare the outer and inner thirds.
inline double heatmap_band_mean(const Heatmap& hm, double lo_frac,
                                double hi_frac) {
  if (!(lo_frac >= 0.0 && hi_frac >= lo_frac))
    throw InvalidInputError("heatmap band: bad radial bounds");
  const double max_norm = std::hypot(hm.range_um, hm.range_um);
  const int k = (hm.side - 1) / 2;
  double acc = 0.0;
  int n = 0;
  for (int iy = -k; iy <= k; ++iy)
    for (int ix = -k; ix <= k; ++ix) {
      const double r =
          std::hypot(ix * hm.step_um, iy * hm.step_um) / max_norm;
      if (r >= lo_frac - 1e-12 && r <= hi_frac + 1e-12) {
        acc += hm.at(iy + k, ix + k);
        n += 1;
      }
    }
  if (n == 0) throw InvalidInputError("heatmap band: empty radial band");
  return acc / n;
}

// ---------------------------------------------------------------------------
// Pre-alignment (sharpness scan re-export) and single-step adjustment.

/// Sharpest machine command over a square scan around zero; see
/// prealign_scan for the scan rules (noiseless renders, smallest-|offset|
/// tie break).
inline MisalignmentOffset prealign(const LensInstance& lens,
                                   const DomainConfig& domain,
                                   double scan_range, double scan_step) {
  return prealign_scan(lens, domain, scan_range, scan_step);
}

/// One adjustment attempt. The machine sits at `start` (relative to the
/// lens's calibrated origin), captures, predicts the misalignment and moves
/// by the negated prediction; `residual` is where it lands and `after` is
/// the capture taken there for visual inspection.
struct AdjustResult {
  MisalignmentOffset start;
  MisalignmentOffset predicted;
  MisalignmentOffset residual;
  bool success = false;
  FovImageSet after;
};

/// Adjustment with an arbitrary predictor callable (const FovImageSet&) ->
/// MisalignmentOffset. Success requires |residual| <= threshold on both axes.
template <class Predictor>
AdjustResult adjust_once_with(Predictor&& predict, const LensInstance& lens,
                              const MisalignmentOffset& origin,
                              const MisalignmentOffset& start,
                              const DomainConfig& domain,
                              std::uint64_t rng_seed,
                              double success_threshold_um = 2.0) {
  if (!(success_threshold_um > 0.0))
    throw InvalidInputError("adjust: success threshold must be positive");
  if (!start.finite() || !origin.finite())
    throw InvalidInputError("adjust: offsets must be finite");
  AdjustResult res;
  res.start = start;
  const FovImageSet capture =
      simulate_capture(origin + start, lens, domain, rng_seed);
  res.predicted = predict(capture);
  if (!res.predicted.finite())
    throw InvalidInputError("adjust: non-finite prediction");
  res.residual = {start.dx_um - res.predicted.dx_um,
                  start.dy_um - res.predicted.dy_um};
  res.success = std::abs(res.residual.dx_um) <= success_threshold_um &&
                std::abs(res.residual.dy_um) <= success_threshold_um;
  res.after = simulate_capture(origin + res.residual, lens, domain,
                               stable_seed(rng_seed, 1));
  return res;
}

template <class S>
AdjustResult adjust_once(AlignerModelT<S>& model, const LensInstance& lens,
                         const MisalignmentOffset& origin,
                         const MisalignmentOffset& start,
                         const DomainConfig& domain, std::uint64_t rng_seed,
                         double success_threshold_um = 2.0) {
  return adjust_once_with(
      [&](const FovImageSet& c) { return predict_offset(model, c); }, lens,
      origin, start, domain, rng_seed, success_threshold_um);
}

/// Optional multi-step refinement: each round starts from the previous
/// residual and re-captures with a fresh seed; stops early on success.
template <class S>
std::vector<AdjustResult> adjust_iterate(
    AlignerModelT<S>& model, const LensInstance& lens,
    const MisalignmentOffset& origin, const MisalignmentOffset& start,
    const DomainConfig& domain, std::uint64_t rng_seed, int max_steps,
    double success_threshold_um = 2.0) {
  if (max_steps < 1) throw InvalidInputError("adjust: need at least one step");
  std::vector<AdjustResult> out;
  MisalignmentOffset at = start;
  for (int k = 0; k < max_steps; ++k) {
    out.push_back(adjust_once(model, lens, origin, at, domain,
                              stable_seed(rng_seed, 2, k),
                              success_threshold_um));
    if (out.back().success) break;
    at = out.back().residual;
  }
  return out;
}

/// Fraction of captures in a labeled set whose single-step residual
/// (label - prediction) lands within the threshold on both axes. Each stored
/// capture stands in for the capture the machine would take at its own
/// labeled start position.
template <class Predictor>
double adjust_success_rate_with(Predictor&& predict, const Dataset& test,
                                double success_threshold_um) {
  if (!(success_threshold_um > 0.0))
    throw InvalidInputError("adjust: success threshold must be positive");
  if (!test.labeled())
    throw InvalidInputError("adjust: dataset must be labeled");
  const auto pool = flatten_samples(test);
  if (pool.empty()) throw InvalidInputError("adjust: empty dataset");
  int ok = 0;
  for (const Sample* s : pool) {
    const MisalignmentOffset p = predict(*s);
    if (std::abs(s->label->dx_um - p.dx_um) <= success_threshold_um &&
        std::abs(s->label->dy_um - p.dy_um) <= success_threshold_um)
      ok += 1;
  }
  return static_cast<double>(ok) / static_cast<double>(pool.size());
}

template <class S>
double adjust_success_rate(AlignerModelT<S>& model, const Dataset& test,
                           double success_threshold_um,
                           int batch_size = 16) {
  if (!test.labeled())
    throw InvalidInputError("adjust: dataset must be labeled");
  const auto pool = flatten_samples(test);
  if (pool.empty()) throw InvalidInputError("adjust: empty dataset");
  const auto preds = predict_batch(model, pool, batch_size);
  std::size_t i = 0;
  return adjust_success_rate_with(
      [&](const Sample&) { return preds[i++]; }, test, success_threshold_um);
}

// ---------------------------------------------------------------------------
// Pipeline presets: the six comparison rows. Each preset fixes a training
// recipe; all presets share one test set.
//
//   OnDevice(n)       supervised on n dense-scanned held-out target lenses
//   OnDeviceSparse(1) supervised on one such lens at a coarser scan pitch
//   SimulationNoTol   supervised on renders of the ideal lens only
//   Simulation        supervised on renders of tolerance-perturbed lenses
//   DA3NoTol          style translation + adaptive training, ideal-lens source
//   DA3               style translation + adaptive training, full source

enum class PresetKind {
  on_device,
  on_device_sparse,
  simulation_no_tol,
  simulation,
  da3_no_tol,
  da3,
};

inline constexpr std::array<PresetKind, 6> kAllPresets = {
    PresetKind::on_device,       PresetKind::on_device_sparse,
    PresetKind::simulation_no_tol, PresetKind::simulation,
    PresetKind::da3_no_tol,      PresetKind::da3,
};

/// File-system friendly identifier, also the accepted CLI spelling.
inline std::string preset_slug(PresetKind k) {
  switch (k) {
    case PresetKind::on_device: return "on_device";
    case PresetKind::on_device_sparse: return "on_device_sparse";
    case PresetKind::simulation_no_tol: return "simulation_no_tol";
    case PresetKind::simulation: return "simulation";
    case PresetKind::da3_no_tol: return "da3_no_tol";
    case PresetKind::da3: return "da3";
  }
  throw InvalidInputError("unknown preset");
}

/// Display name for tables; n_oracle only affects the OnDevice row.
inline std::string preset_name(PresetKind k, int n_oracle) {
  switch (k) {
    case PresetKind::on_device:
      return "OnDevice(" + std::to_string(n_oracle) + ")";
    case PresetKind::on_device_sparse: return "OnDeviceSparse(1)";
    case PresetKind::simulation_no_tol: return "SimulationNoTol";
    case PresetKind::simulation: return "Simulation";
    case PresetKind::da3_no_tol: return "DA3NoTol";
    case PresetKind::da3: return "DA3";
  }
  throw InvalidInputError("unknown preset");
}

inline PresetKind preset_from_string(const std::string& s) {
  for (PresetKind k : kAllPresets)
    if (s == preset_slug(k)) return k;
  std::string valid;
  for (PresetKind k : kAllPresets) {
    if (!valid.empty()) valid += ", ";
    valid += preset_slug(k);
  }
  throw InvalidConfigError("unknown preset \"" + s + "\" (expected one of " +
                           valid + ")");
}

inline bool preset_is_domain_adaptive(PresetKind k) {
  return k == PresetKind::da3 || k == PresetKind::da3_no_tol;
}

/// Datasets a pipeline run draws from. Only the sets a preset actually needs
/// must be present.
struct PipelineInputs {
  const Dataset* source = nullptr;         // labeled, tolerance-perturbed units
  const Dataset* source_no_tol = nullptr;  // labeled, ideal unit only
  const Dataset* target = nullptr;         // unlabeled captures, new module
  const Dataset* oracle = nullptr;         // labeled held-out target lenses
  const Dataset* test = nullptr;           // shared labeled test set
};

struct PipelineOptions {
  AlignerConfig aligner;
  GeneratorConfig generator;
  StyleDiscriminatorConfig critic;
  TransformTrainOptions transform_train;
  AlignerTrainOptions align_train;
  /// Scan-pitch multiplier for the sparse on-device preset.
  int sparse_factor = 5;
  std::uint64_t seed = 1;
};

// Per-preset seed streams, shared by the in-memory runner and the staged
// command-line path so both produce identical artifacts.
inline std::uint64_t preset_model_seed(std::uint64_t root, PresetKind k) {
  return stable_seed(root, 0x4D, static_cast<std::uint64_t>(k));
}
inline std::uint64_t preset_train_seed(std::uint64_t root, PresetKind k) {
  return stable_seed(root, 0x51, static_cast<std::uint64_t>(k));
}
inline std::uint64_t preset_generator_seed(std::uint64_t root, PresetKind k) {
  return stable_seed(root, 0x47, static_cast<std::uint64_t>(k));
}
inline std::uint64_t preset_critic_seed(std::uint64_t root, PresetKind k) {
  return stable_seed(root, 0x43, static_cast<std::uint64_t>(k));
}
inline std::uint64_t preset_transform_seed(std::uint64_t root, PresetKind k) {
  return stable_seed(root, 0x54, static_cast<std::uint64_t>(k));
}

namespace detail {

inline const Dataset& require_input(const Dataset* ds, const char* what) {
  if (!ds)
    throw InvalidConfigError(std::string("pipeline: missing dataset: ") +
                             what);
  return *ds;
}

}  // namespace detail

/// The labeled set a supervised preset trains on (resolving lens subsetting
/// and sparsification). Domain-adaptive presets have no supervised set.
inline Dataset supervised_training_set(PresetKind k, const PipelineInputs& in,
                                       int sparse_factor) {
  switch (k) {
    case PresetKind::on_device:
      return detail::require_input(in.oracle, "oracle");
    case PresetKind::on_device_sparse:
      return sparsify_grid_dataset(
          subset_lenses(detail::require_input(in.oracle, "oracle"), 1),
          sparse_factor);
    case PresetKind::simulation_no_tol:
      return detail::require_input(in.source_no_tol, "source_no_tol");
    case PresetKind::simulation:
      return detail::require_input(in.source, "source");
    default:
      throw InvalidConfigError(
          "pipeline: preset has no supervised training set");
  }
}

/// The labeled source set a domain-adaptive preset translates and trains on.
inline const Dataset& da_source_set(PresetKind k, const PipelineInputs& in) {
  switch (k) {
    case PresetKind::da3:
      return detail::require_input(in.source, "source");
    case PresetKind::da3_no_tol:
      return detail::require_input(in.source_no_tol, "source_no_tol");
    default:
      throw InvalidConfigError("pipeline: preset is not domain-adaptive");
  }
}

/// Everything a preset run produces besides the evaluation numbers. The
/// translated set and generator are only populated for the adaptive presets.
struct PipelineArtifacts {
  std::string name;
  std::unique_ptr<AlignerModel> model;
  std::unique_ptr<GeneratorModel> generator;
  std::unique_ptr<StyleDiscriminator> critic;
  std::unique_ptr<Dataset> s2t;
  AlignerTrainResult align_curve;
  TransformTrainResult transform_curve;
};

/// Execute a preset's training recipe on the given inputs.
inline PipelineArtifacts train_pipeline(PresetKind kind,
                                        const PipelineInputs& in,
                                        const PipelineOptions& opt) {
  PipelineArtifacts art;
  const int n_oracle =
      in.oracle ? static_cast<int>(in.oracle->lenses.size()) : 0;
  art.name = preset_name(kind, n_oracle);
  art.model = std::make_unique<AlignerModel>(
      opt.aligner, preset_model_seed(opt.seed, kind));

  AlignerTrainOptions train = opt.align_train;
  train.seed = preset_train_seed(opt.seed, kind);

  if (preset_is_domain_adaptive(kind)) {
    const Dataset& src = da_source_set(kind, in);
    const Dataset& trg = detail::require_input(in.target, "target");
    art.generator = std::make_unique<GeneratorModel>(
        opt.generator, preset_generator_seed(opt.seed, kind));
    art.critic = std::make_unique<StyleDiscriminator>(
        opt.critic, preset_critic_seed(opt.seed, kind));
    TransformTrainOptions tt = opt.transform_train;
    tt.seed = preset_transform_seed(opt.seed, kind);
    art.transform_curve =
        train_transform(*art.generator, *art.critic, src, trg, tt);
    art.s2t = std::make_unique<Dataset>(translate_dataset(*art.generator, src));
    art.align_curve = train_da3(*art.model, src, *art.s2t, train);
  } else {
    const Dataset ds = supervised_training_set(kind, in, opt.sparse_factor);
    art.align_curve = train_supervised(*art.model, ds, train);
  }
  return art;
}

struct PipelineResult {
  std::string name;
  EvalReport report;
  AlignerTrainResult align_curve;
  TransformTrainResult transform_curve;
};

/// Train one preset and evaluate it on the shared test set.
inline PipelineResult run_pipeline(PresetKind kind, const PipelineInputs& in,
                                   const PipelineOptions& opt) {
  PipelineArtifacts art = train_pipeline(kind, in, opt);
  const Dataset& test = detail::require_input(in.test, "test");
  PipelineResult res;
  res.name = std::move(art.name);
  res.report = evaluate(*art.model, test);
  res.align_curve = std::move(art.align_curve);
  res.transform_curve = std::move(art.transform_curve);
  return res;
}

}  // namespace lensalign
