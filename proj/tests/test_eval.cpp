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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lensalign/eval.hpp"

namespace la = lensalign;
namespace fs = std::filesystem;

namespace {

// Labeled grid dataset with blank images: everything metric-side (labels,
// lens ids, positions) is real, only pixels are placeholders.
la::Dataset fake_grid_dataset(double range_um, double step_um, int n_lenses,
                              int first_lens_id = 9000) {
  la::Dataset ds;
  ds.role = la::Role::test;
  ds.domain.image_side = 32;
  ds.sampling = {range_um, step_um, 0};
  const auto grid = la::grid_positions(range_um, step_um);
  for (int l = 0; l < n_lenses; ++l) {
    la::LensRecord lr;
    lr.lens = la::LensInstance::ideal(first_lens_id + l);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      la::Sample s;
      s.sample_id = static_cast<int>(i);
      s.label = grid[i];
      s.images.offset = grid[i];
      s.images.lens_id = lr.lens.lens_id;
      s.images.fovs.assign(5, la::Image(32));
      lr.samples.push_back(std::move(s));
    }
    ds.lenses.push_back(std::move(lr));
  }
  ds.validate();
  return ds;
}

la::Dataset two_sample_dataset() {
  la::Dataset ds;
  ds.role = la::Role::test;
  ds.domain.image_side = 32;
  ds.sampling = {30.0, 2.0, 0};
  la::LensRecord lr;
  lr.lens = la::LensInstance::ideal(9100);
  for (int i = 0; i < 2; ++i) {
    la::Sample s;
    s.sample_id = i;
    s.label = la::MisalignmentOffset{0.0, 0.0};
    s.images.fovs.assign(5, la::Image(32));
    lr.samples.push_back(std::move(s));
  }
  ds.lenses.push_back(std::move(lr));
  return ds;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Shared miniature end-to-end world: real renders, two mismatched domains.
struct TinyWorld {
  la::DomainConfig src_dom;
  la::DomainConfig trg_dom;
  la::Dataset source;
  la::Dataset source_no_tol;
  la::Dataset target;
  la::Dataset test;
  la::Dataset oracle;
};

const TinyWorld& tiny_world() {
  static const TinyWorld w = [] {
    TinyWorld t;
    t.src_dom.label = la::DomainLabel::source_clean;
    t.src_dom.image_side = 32;
    t.trg_dom = t.src_dom;
    t.trg_dom.label = la::DomainLabel::target;
    t.trg_dom.isp.gamma_lo = 1.7;
    t.trg_dom.isp.gamma_hi = 1.9;
    t.trg_dom.isp.scale_lo = 0.98;
    t.trg_dom.isp.scale_hi = 1.02;
    t.trg_dom.isp.noise_sigma = 0.02;
    t.trg_dom.isp.quantize_bits = 8;

    const la::SamplingSpec grid{4.0, 2.0, 0};
    la::SamplingSpec random_cmds = grid;
    random_cmds.n_random = 5;
    t.source = la::build_source_dataset(t.src_dom, 1, grid, 77);
    t.source_no_tol = la::build_source_dataset(t.src_dom, 0, grid, 77);
    t.target = la::build_target_dataset(t.trg_dom, random_cmds, 78);
    auto eval_sets = la::build_eval_datasets(t.trg_dom, 1, 1, grid, 79);
    t.test = std::move(eval_sets.first);
    t.oracle = std::move(eval_sets.second);
    return t;
  }();
  return w;
}

la::PipelineOptions tiny_pipeline_options() {
  la::PipelineOptions opt;
  opt.aligner.base_channels = 4;
  opt.aligner.feat_dim = 32;
  opt.aligner.head_hidden = 16;
  opt.aligner.gn_groups = 2;
  opt.aligner.dropout = 0.1;
  opt.aligner.label_scale_um = 4.0;
  opt.generator.base_channels = 4;
  opt.generator.code_dim = 8;
  opt.generator.codebook_size = 16;
  opt.generator.gn_groups = 2;
  opt.critic.base_channels = 4;
  opt.transform_train.iterations = 6;
  opt.transform_train.batch_size = 4;
  opt.transform_train.log_every = 5;
  opt.align_train.iterations = 8;
  opt.align_train.batch_size = 4;
  opt.align_train.log_every = 4;
  opt.sparse_factor = 2;
  opt.seed = 5;
  return opt;
}

}  // namespace

TEST_CASE("report statistics match hand-computed values") {
  SECTION("two samples with known errors") {
    const auto ds = two_sample_dataset();
    const auto rep = la::evaluate_from_predictions(
        ds, {{2.0, 0.0}, {0.0, 2.0}});
    REQUIRE(rep.n_samples == 2);
    REQUIRE(rep.mae_x == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rep.mae_y == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rep.mae_avg == Catch::Approx(1.0).margin(1e-12));
    // Population spread of |errors|: x errors {2, 0}, y errors {0, 2},
    // per-sample means {1, 1}.
    REQUIRE(rep.sd_x == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rep.sd_y == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(rep.sd_avg == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("constant center guess over the full grid") {
    const auto ds = fake_grid_dataset(30.0, 2.0, 1);
    const auto rep = la::evaluate_with(
        [](const la::Sample&) { return la::MisalignmentOffset{0.0, 0.0}; },
        ds);
    REQUIRE(rep.n_samples == 961);
    REQUIRE(rep.mae_x == Catch::Approx(480.0 / 31.0).margin(1e-9));
    REQUIRE(rep.mae_y == Catch::Approx(480.0 / 31.0).margin(1e-9));
    REQUIRE(std::abs(rep.mae_avg - 0.5 * (rep.mae_x + rep.mae_y)) <= 1e-9);
    REQUIRE(rep.per_position_errors.size() == 961);
    REQUIRE(rep.per_position_errors.at({0.0, 0.0}) == 0.0);
    REQUIRE(rep.per_position_errors.at({30.0, 30.0}) ==
            Catch::Approx(30.0).margin(1e-12));
    REQUIRE(rep.sd_x > 0.0);
  }

  SECTION("brute-force recomputation agrees to 1e-12") {
    const auto ds = fake_grid_dataset(6.0, 2.0, 2);
    la::Rng rng(10);
    std::vector<la::MisalignmentOffset> preds;
    for (std::size_t i = 0; i < ds.total_samples(); ++i)
      preds.push_back({rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)});
    const auto rep = la::evaluate_from_predictions(ds, preds);

    std::vector<double> ex, ey, ea;
    std::map<int, std::vector<double>> by_lens;
    std::map<la::PositionKey, std::vector<double>> by_pos;
    std::size_t i = 0;
    for (const auto& lr : ds.lenses)
      for (const auto& s : lr.samples) {
        const double dx = std::abs(preds[i].dx_um - s.label->dx_um);
        const double dy = std::abs(preds[i].dy_um - s.label->dy_um);
        ++i;
        ex.push_back(dx);
        ey.push_back(dy);
        ea.push_back(0.5 * (dx + dy));
        by_lens[lr.lens.lens_id].push_back(0.5 * (dx + dy));
        by_pos[{s.label->dy_um, s.label->dx_um}].push_back(0.5 * (dx + dy));
      }
    auto mean = [](const std::vector<double>& v) {
      double a = 0.0;
      for (double x : v) a += x;
      return a / static_cast<double>(v.size());
    };
    auto sd = [&](const std::vector<double>& v) {
      const double m = mean(v);
      double a = 0.0;
      for (double x : v) a += (x - m) * (x - m);
      return std::sqrt(a / static_cast<double>(v.size()));
    };
    REQUIRE(std::abs(rep.mae_x - mean(ex)) <= 1e-12);
    REQUIRE(std::abs(rep.mae_y - mean(ey)) <= 1e-12);
    REQUIRE(std::abs(rep.mae_avg - 0.5 * (mean(ex) + mean(ey))) <= 1e-12);
    REQUIRE(std::abs(rep.sd_x - sd(ex)) <= 1e-12);
    REQUIRE(std::abs(rep.sd_y - sd(ey)) <= 1e-12);
    REQUIRE(std::abs(rep.sd_avg - sd(ea)) <= 1e-12);
    for (const auto& [id, v] : by_lens)
      REQUIRE(std::abs(rep.per_lens_mae.at(id) - mean(v)) <= 1e-12);
    for (const auto& [key, v] : by_pos)
      REQUIRE(std::abs(rep.per_position_errors.at(key) - mean(v)) <= 1e-12);
  }
}

TEST_CASE("perfect predictions and malformed inputs") {
  SECTION("label-echo stub scores zero everywhere") {
    const auto ds = fake_grid_dataset(4.0, 2.0, 2);
    const auto rep =
        la::evaluate_with([](const la::Sample& s) { return *s.label; }, ds);
    REQUIRE(rep.mae_x == 0.0);
    REQUIRE(rep.mae_y == 0.0);
    REQUIRE(rep.mae_avg == 0.0);
    REQUIRE(rep.sd_x == 0.0);
    REQUIRE(rep.sd_avg == 0.0);
    for (const auto& [k, v] : rep.per_position_errors) REQUIRE(v == 0.0);
    for (const auto& [k, v] : rep.per_lens_mae) REQUIRE(v == 0.0);
  }

  SECTION("empty and unlabeled datasets are rejected") {
    la::Dataset empty;
    empty.role = la::Role::test;
    empty.lenses.resize(1);
    REQUIRE_THROWS_AS(
        la::evaluate_with([](const la::Sample& s) { return *s.label; }, empty),
        la::InvalidInputError);

    auto unlabeled = fake_grid_dataset(4.0, 2.0, 1);
    unlabeled.role = la::Role::target_unlabeled;
    for (auto& lr : unlabeled.lenses)
      for (auto& s : lr.samples) s.label.reset();
    REQUIRE_THROWS_AS(
        la::evaluate_with(
            [](const la::Sample&) {
              return la::MisalignmentOffset{0.0, 0.0};
            },
            unlabeled),
        la::InvalidInputError);
  }

  SECTION("prediction count mismatch is rejected") {
    const auto ds = two_sample_dataset();
    REQUIRE_THROWS_AS(la::evaluate_from_predictions(ds, {{0.0, 0.0}}),
                      la::InvalidInputError);
  }
}

TEST_CASE("report json round trip preserves every field") {
  const auto ds = fake_grid_dataset(4.0, 2.0, 2);
  la::Rng rng(11);
  std::vector<la::MisalignmentOffset> preds;
  for (std::size_t i = 0; i < ds.total_samples(); ++i)
    preds.push_back({rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)});
  const auto rep = la::evaluate_from_predictions(ds, preds);

  const auto back = la::eval_report_from_json(la::to_json(rep));
  REQUIRE(back.mae_x == rep.mae_x);
  REQUIRE(back.mae_y == rep.mae_y);
  REQUIRE(back.mae_avg == rep.mae_avg);
  REQUIRE(back.sd_x == rep.sd_x);
  REQUIRE(back.sd_y == rep.sd_y);
  REQUIRE(back.sd_avg == rep.sd_avg);
  REQUIRE(back.n_samples == rep.n_samples);
  REQUIRE(back.per_position_errors == rep.per_position_errors);
  REQUIRE(back.per_lens_mae == rep.per_lens_mae);

  const auto dir = fresh_dir("lensalign_test_eval_report");
  la::write_report_json(rep, dir / "report.json");
  const auto loaded = la::read_report_json(dir / "report.json");
  REQUIRE(loaded.mae_avg == rep.mae_avg);
  REQUIRE(loaded.per_position_errors == rep.per_position_errors);
  REQUIRE_THROWS_AS(la::read_report_json(dir / "missing.json"),
                    la::MissingFileError);
  fs::remove_all(dir);
}

TEST_CASE("heatmap arranges cells on the grid") {
  const auto ds = fake_grid_dataset(30.0, 2.0, 1);
  const la::SamplingSpec sampling{30.0, 2.0, 0};

  SECTION("perfect predictor gives an all-zero grid") {
    const auto rep =
        la::evaluate_with([](const la::Sample& s) { return *s.label; }, ds);
    const auto hm = la::error_heatmap(rep, sampling);
    REQUIRE(hm.side == 31);
    REQUIRE(hm.values.size() == 961);
    for (double v : hm.values) REQUIRE(v == 0.0);
  }

  SECTION("cells equal the per-position entries exactly") {
    const auto rep = la::evaluate_with(
        [](const la::Sample&) { return la::MisalignmentOffset{0.0, 0.0}; },
        ds);
    const auto hm = la::error_heatmap(rep, sampling);
    REQUIRE(hm.side == 31);
    const auto grid = la::grid_positions(30.0, 2.0);
    for (std::size_t i = 0; i < grid.size(); ++i)
      REQUIRE(hm.values[i] ==
              rep.per_position_errors.at({grid[i].dy_um, grid[i].dx_um}));
    // Row-major orientation: first cell is the (-30, -30) corner.
    REQUIRE(hm.at(0, 0) == 30.0);
    REQUIRE(hm.at(15, 15) == 0.0);
  }

  SECTION("non-grid reports are rejected") {
    auto rep = la::evaluate_with(
        [](const la::Sample&) { return la::MisalignmentOffset{0.0, 0.0}; },
        ds);
    const la::SamplingSpec other{30.0, 5.0, 0};
    REQUIRE_THROWS_AS(la::error_heatmap(rep, other), la::InvalidInputError);

    // Same count, one key nudged off-grid.
    auto shifted = rep;
    shifted.per_position_errors.erase({0.0, 0.0});
    shifted.per_position_errors[{0.0, 1.0}] = 0.5;
    REQUIRE_THROWS_AS(la::error_heatmap(shifted, sampling),
                      la::InvalidInputError);
  }

  SECTION("csv and png emission") {
    const auto rep = la::evaluate_with(
        [](const la::Sample&) { return la::MisalignmentOffset{0.0, 0.0}; },
        ds);
    const auto hm = la::error_heatmap(rep, sampling);
    const auto dir = fresh_dir("lensalign_test_eval_heatmap");
    la::write_heatmap_csv(hm, dir / "heatmap.csv");
    la::write_heatmap_png(hm, dir / "heatmap.png");

    const std::string csv = la::read_text(dir / "heatmap.csv");
    REQUIRE(csv.rfind("dx_um,dy_um,mae_um\n", 0) == 0);
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 962);

    const auto im = la::decode_png(la::read_bytes(dir / "heatmap.png"));
    REQUIRE(im.side == 31);
    // Corners carry the largest error, so they saturate to white.
    REQUIRE(im.at(0, 0) == 1.0f);
    REQUIRE(im.at(15, 15) == 0.0f);
    fs::remove_all(dir);
  }

  SECTION("radial band means expose the center-to-edge trend") {
    const auto rep = la::evaluate_with(
        [](const la::Sample&) { return la::MisalignmentOffset{0.0, 0.0}; },
        ds);
    const auto hm = la::error_heatmap(rep, sampling);
    const double inner = la::heatmap_band_mean(hm, 0.0, 1.0 / 3.0);
    const double outer = la::heatmap_band_mean(hm, 2.0 / 3.0, 1.0);
    REQUIRE(outer > inner);
    REQUIRE_THROWS_AS(la::heatmap_band_mean(hm, 0.5, 0.2),
                      la::InvalidInputError);
  }
}

TEST_CASE("adjustment follows the capture-predict-move protocol") {
  la::DomainConfig dom;
  dom.image_side = 32;
  const auto lens = la::LensInstance::ideal(1);
  const la::MisalignmentOffset origin{0.0, 0.0};

  SECTION("start-echo stub lands exactly on target") {
    const la::MisalignmentOffset start{6.0, -4.0};
    const auto res = la::adjust_once_with(
        [&](const la::FovImageSet&) { return start; }, lens, origin, start,
        dom, 3);
    REQUIRE(res.predicted == start);
    REQUIRE(res.residual == la::MisalignmentOffset{0.0, 0.0});
    REQUIRE(res.success);
    REQUIRE(res.after.fovs.size() == 5);
    REQUIRE(res.after.offset == origin + res.residual);
  }

  SECTION("zero predictor far from center fails") {
    const la::MisalignmentOffset start{30.0, 30.0};
    const auto res = la::adjust_once_with(
        [](const la::FovImageSet&) {
          return la::MisalignmentOffset{0.0, 0.0};
        },
        lens, origin, start, dom, 3);
    REQUIRE(res.residual == start);
    REQUIRE_FALSE(res.success);
  }

  SECTION("threshold boundary") {
    const la::MisalignmentOffset start{5.0, 5.0};
    const auto at_limit = la::adjust_once_with(
        [](const la::FovImageSet&) {
          return la::MisalignmentOffset{3.0, 3.0};
        },
        lens, origin, start, dom, 3);
    REQUIRE(at_limit.residual == la::MisalignmentOffset{2.0, 2.0});
    REQUIRE(at_limit.success);

    const auto just_over = la::adjust_once_with(
        [](const la::FovImageSet&) {
          return la::MisalignmentOffset{2.99, 5.0};
        },
        lens, origin, start, dom, 3);
    REQUIRE(std::abs(just_over.residual.dx_um) > 2.0);
    REQUIRE_FALSE(just_over.success);

    const auto strict = la::adjust_once_with(
        [](const la::FovImageSet&) {
          return la::MisalignmentOffset{3.5, 3.5};
        },
        lens, origin, start, dom, 3, 1.0);
    REQUIRE_FALSE(strict.success);  // residual 1.5 fails the 1 um threshold
  }

  SECTION("success flag matches the residual predicate for random trials") {
    la::Rng rng(21);
    for (int k = 0; k < 40; ++k) {
      const la::MisalignmentOffset start{rng.uniform(-10.0, 10.0),
                                         rng.uniform(-10.0, 10.0)};
      const la::MisalignmentOffset guess{rng.uniform(-10.0, 10.0),
                                         rng.uniform(-10.0, 10.0)};
      const auto res = la::adjust_once_with(
          [&](const la::FovImageSet&) { return guess; }, lens, origin, start,
          dom, 100 + static_cast<std::uint64_t>(k));
      const bool expect = std::abs(start.dx_um - guess.dx_um) <= 2.0 &&
                          std::abs(start.dy_um - guess.dy_um) <= 2.0;
      REQUIRE(res.success == expect);
    }
  }

  SECTION("success rate over a labeled grid") {
    const auto ds = fake_grid_dataset(4.0, 2.0, 1);
    const double oracle_rate = la::adjust_success_rate_with(
        [](const la::Sample& s) { return *s.label; }, ds, 2.0);
    REQUIRE(oracle_rate == 1.0);
    // Zero guess succeeds only where both label axes are within +-2: a 3x3
    // block of the 5x5 grid.
    const double zero_rate = la::adjust_success_rate_with(
        [](const la::Sample&) { return la::MisalignmentOffset{0.0, 0.0}; },
        ds, 2.0);
    REQUIRE(zero_rate == Catch::Approx(9.0 / 25.0).margin(1e-12));
    REQUIRE_THROWS_AS(
        la::adjust_success_rate_with(
            [](const la::Sample& s) { return *s.label; }, ds, 0.0),
        la::InvalidInputError);
  }
}

TEST_CASE("preset naming and training-set recipes") {
  SECTION("names, slugs and parsing") {
    REQUIRE(la::preset_name(la::PresetKind::on_device, 2) == "OnDevice(2)");
    REQUIRE(la::preset_name(la::PresetKind::on_device_sparse, 2) ==
            "OnDeviceSparse(1)");
    REQUIRE(la::preset_name(la::PresetKind::simulation_no_tol, 0) ==
            "SimulationNoTol");
    REQUIRE(la::preset_name(la::PresetKind::simulation, 0) == "Simulation");
    REQUIRE(la::preset_name(la::PresetKind::da3_no_tol, 0) == "DA3NoTol");
    REQUIRE(la::preset_name(la::PresetKind::da3, 0) == "DA3");
    for (la::PresetKind k : la::kAllPresets)
      REQUIRE(la::preset_from_string(la::preset_slug(k)) == k);
    try {
      la::preset_from_string("bogus");
      FAIL("expected an error");
    } catch (const la::InvalidConfigError& e) {
      REQUIRE(std::string(e.what()).find("bogus") != std::string::npos);
      REQUIRE(std::string(e.what()).find("da3") != std::string::npos);
    }
  }

  SECTION("sparse on-device recipe coarsens the scan") {
    la::PipelineInputs in;
    const auto oracle = fake_grid_dataset(30.0, 2.0, 2, 3000);
    in.oracle = &oracle;
    const auto sparse = la::supervised_training_set(
        la::PresetKind::on_device_sparse, in, 5);
    REQUIRE(sparse.lenses.size() == 1);
    REQUIRE(sparse.total_samples() == 49);
    REQUIRE(sparse.sampling.step_um == 10.0);
    for (const auto& s : sparse.lenses[0].samples) {
      REQUIRE(std::remainder(s.label->dx_um, 10.0) == 0.0);
      REQUIRE(std::remainder(s.label->dy_um, 10.0) == 0.0);
    }

    const auto desk_oracle = fake_grid_dataset(15.0, 3.0, 1, 3000);
    la::PipelineInputs desk_in;
    desk_in.oracle = &desk_oracle;
    const auto desk_sparse = la::supervised_training_set(
        la::PresetKind::on_device_sparse, desk_in, 5);
    REQUIRE(desk_sparse.total_samples() == 9);
  }

  SECTION("dataset routing and missing-input errors") {
    const auto source = fake_grid_dataset(4.0, 2.0, 2, 0);
    const auto no_tol = fake_grid_dataset(4.0, 2.0, 1, 0);
    la::PipelineInputs in;
    in.source = &source;
    in.source_no_tol = &no_tol;
    REQUIRE(la::supervised_training_set(la::PresetKind::simulation, in, 5)
                .total_samples() == source.total_samples());
    REQUIRE(
        la::supervised_training_set(la::PresetKind::simulation_no_tol, in, 5)
            .total_samples() == no_tol.total_samples());
    REQUIRE(&la::da_source_set(la::PresetKind::da3, in) == &source);
    REQUIRE(&la::da_source_set(la::PresetKind::da3_no_tol, in) == &no_tol);
    REQUIRE_THROWS_AS(la::da_source_set(la::PresetKind::simulation, in),
                      la::InvalidConfigError);

    try {
      la::supervised_training_set(la::PresetKind::on_device, in, 5);
      FAIL("expected an error");
    } catch (const la::InvalidConfigError& e) {
      REQUIRE(std::string(e.what()).find("oracle") != std::string::npos);
    }
    REQUIRE_THROWS_AS(
        la::supervised_training_set(la::PresetKind::da3, in, 5),
        la::InvalidConfigError);
  }
}

TEST_CASE("batched and per-sample evaluation agree") {
  const auto& w = tiny_world();
  auto opt = tiny_pipeline_options();
  la::AlignerModel model(opt.aligner, 99);
  const auto batched = la::evaluate(model, w.test);
  const auto single = la::evaluate_with(
      [&](const la::Sample& s) { return la::predict_offset(model, s.images); },
      w.test);
  // Batching regroups the float convolution arithmetic, so agreement is
  // tight but not bitwise.
  REQUIRE(batched.mae_x == Catch::Approx(single.mae_x).margin(1e-4));
  REQUIRE(batched.mae_y == Catch::Approx(single.mae_y).margin(1e-4));
  REQUIRE(batched.sd_x == Catch::Approx(single.sd_x).margin(1e-4));
  for (const auto& [key, v] : single.per_position_errors)
    REQUIRE(batched.per_position_errors.at(key) ==
            Catch::Approx(v).margin(1e-4));
  REQUIRE(batched.n_samples == static_cast<int>(w.test.total_samples()));
}

TEST_CASE("tiny pipeline runs produce finite reports") {
  const auto& w = tiny_world();
  la::PipelineInputs in;
  in.source = &w.source;
  in.source_no_tol = &w.source_no_tol;
  in.target = &w.target;
  in.oracle = &w.oracle;
  in.test = &w.test;
  const auto opt = tiny_pipeline_options();

  SECTION("supervised recipe") {
    const auto res = la::run_pipeline(la::PresetKind::simulation, in, opt);
    REQUIRE(res.name == "Simulation");
    REQUIRE(res.report.n_samples ==
            static_cast<int>(w.test.total_samples()));
    REQUIRE(std::isfinite(res.report.mae_avg));
    REQUIRE(res.report.mae_avg >= 0.0);
    REQUIRE_FALSE(res.align_curve.curve.empty());
    REQUIRE(res.transform_curve.curve.empty());
  }

  SECTION("sparse on-device recipe") {
    const auto res =
        la::run_pipeline(la::PresetKind::on_device_sparse, in, opt);
    REQUIRE(res.name == "OnDeviceSparse(1)");
    REQUIRE(std::isfinite(res.report.mae_avg));
  }

  SECTION("domain-adaptive recipe") {
    const auto art =
        la::train_pipeline(la::PresetKind::da3_no_tol, in, opt);
    REQUIRE(art.name == "DA3NoTol");
    REQUIRE(art.generator != nullptr);
    REQUIRE(art.s2t != nullptr);
    REQUIRE(art.s2t->role == la::Role::pseudo_target);
    REQUIRE(art.s2t->total_samples() == w.source_no_tol.total_samples());
    REQUIRE_FALSE(art.transform_curve.curve.empty());
    REQUIRE_FALSE(art.align_curve.curve.empty());
    const auto rep = la::evaluate(*art.model, w.test);
    REQUIRE(std::isfinite(rep.mae_avg));
  }

  SECTION("missing datasets are named") {
    la::PipelineInputs none;
    try {
      la::run_pipeline(la::PresetKind::da3, none, opt);
      FAIL("expected an error");
    } catch (const la::InvalidConfigError& e) {
      REQUIRE(std::string(e.what()).find("source") != std::string::npos);
    }
  }
}
