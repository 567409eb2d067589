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

// Command-line orchestrator: turns a config file into datasets, trained
// models and comparison reports. Stages are hash-guarded, so rerunning a
// command with an unchanged resolved config is a cheap no-op and run-all is
// resumable after an interruption.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "lensalign/config.hpp"
#include "lensalign/nn/checkpoint.hpp"

namespace la = lensalign;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Run context and artifact layout.

struct Paths {
  fs::path root;

  fs::path data_dir() const { return root / "data"; }
  fs::path dataset(const std::string& name) const { return data_dir() / name; }
  fs::path transform_ckpt(la::PresetKind k) const {
    return root / "transform" / (la::preset_slug(k) + ".ckpt");
  }
  fs::path transform_curve(la::PresetKind k) const {
    return root / "transform" / (la::preset_slug(k) + "_curve.jsonl");
  }
  fs::path s2t_dir(la::PresetKind k) const {
    return root / "s2t" / la::preset_slug(k);
  }
  fs::path s2t_stamp(la::PresetKind k) const {
    return root / "s2t" / (la::preset_slug(k) + ".stamp.json");
  }
  fs::path model_ckpt(la::PresetKind k) const {
    return root / "models" / (la::preset_slug(k) + ".ckpt");
  }
  fs::path model_curve(la::PresetKind k) const {
    return root / "models" / (la::preset_slug(k) + "_train.jsonl");
  }
  fs::path report_dir(la::PresetKind k) const {
    return root / "reports" / la::preset_slug(k);
  }
  fs::path metrics_csv() const { return root / "reports" / "metrics.csv"; }
  fs::path resolved_config() const { return root / "config.resolved.json"; }
  fs::path run_log() const { return root / "run.log"; }
};

struct Context {
  la::ExperimentConfig cfg;
  Paths paths;
  int workers = 1;

  // Loaded-once dataset cache for multi-stage runs.
  std::optional<la::Dataset> source, source_no_tol, target, test, oracle;
};

void log_line(const Context& ctx, const std::string& stage,
              const std::string& msg) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char ts[32];
  std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  const std::string line =
      std::string("[") + ts + "] [" + stage + "] " + msg + "\n";
  std::ofstream out(ctx.paths.run_log(), std::ios::app);
  out << line;
  std::cout << "[" << stage << "] " << msg << "\n";
}

// Dataset seeds, one stream per collection.
std::uint64_t seed_source(const Context& c) {
  return la::stable_seed(c.cfg.global_seed, 0xD5, 0);
}
std::uint64_t seed_source_no_tol(const Context& c) {
  return la::stable_seed(c.cfg.global_seed, 0xD5, 1);
}
std::uint64_t seed_target(const Context& c) {
  return la::stable_seed(c.cfg.global_seed, 0xD5, 2);
}
std::uint64_t seed_eval(const Context& c) {
  return la::stable_seed(c.cfg.global_seed, 0xD5, 3);
}

// ---------------------------------------------------------------------------
// Dataset access: manifest probing for guards, cached loads for work.

std::optional<la::json> read_manifest(const fs::path& dir) {
  const fs::path p = dir / "manifest.json";
  if (!fs::exists(p)) return std::nullopt;
  try {
    return la::json::parse(la::read_text(p));
  } catch (const la::json::exception&) {
    return std::nullopt;
  }
}

std::string manifest_content_hash(const fs::path& dir,
                                  const std::string& produced_by) {
  const auto doc = read_manifest(dir);
  if (!doc)
    throw la::DependencyError("missing dataset " +
                              (dir / "manifest.json").string() + "; run " +
                              produced_by + " first");
  return doc->at("content_hash").get<std::string>();
}

const la::Dataset& ensure_dataset(Context& ctx,
                                  std::optional<la::Dataset>& slot,
                                  const std::string& name,
                                  const std::string& produced_by) {
  if (!slot) {
    const fs::path dir = ctx.paths.dataset(name);
    if (!fs::exists(dir / "manifest.json"))
      throw la::DependencyError("missing dataset " +
                                (dir / "manifest.json").string() + "; run " +
                                produced_by + " first");
    slot = la::load_dataset(dir);
  }
  return *slot;
}

const la::Dataset& source_ds(Context& c) {
  return ensure_dataset(c, c.source, "source", "gen-data");
}
const la::Dataset& source_no_tol_ds(Context& c) {
  return ensure_dataset(c, c.source_no_tol, "source_no_tol", "gen-data");
}
const la::Dataset& target_ds(Context& c) {
  return ensure_dataset(c, c.target, "target", "gen-data");
}
const la::Dataset& test_ds(Context& c) {
  return ensure_dataset(c, c.test, "test", "gen-data");
}
const la::Dataset& oracle_ds(Context& c) {
  return ensure_dataset(c, c.oracle, "oracle", "gen-data");
}

// ---------------------------------------------------------------------------
// gen-data: build the five collections, skipping any whose stored manifest
// already matches the resolved config (content re-verified by hash).

bool dataset_up_to_date(const Context& ctx, const fs::path& dir,
                        const std::string& expect_config_hash) {
  const auto doc = read_manifest(dir);
  if (!doc) return false;
  try {
    if (doc->at("config_hash").get<std::string>() != expect_config_hash)
      return false;
    la::load_dataset(dir, true);  // re-hash stored bytes
    return true;
  } catch (const la::Error&) {
    return false;
  }
}

void cmd_gen_data(Context& ctx) {
  const auto& cfg = ctx.cfg;
  la::SamplingSpec grid = cfg.sampling;
  grid.n_random = 0;

  struct Spec {
    std::string name;
    la::Role role;
    const la::DomainConfig& domain;
    la::SamplingSpec sampling;
    std::uint64_t seed;
  };
  const std::vector<Spec> specs = {
      {"source", la::Role::source, cfg.source_domain, grid, seed_source(ctx)},
      {"source_no_tol", la::Role::source, cfg.source_domain, grid,
       seed_source_no_tol(ctx)},
      {"target", la::Role::target_unlabeled, cfg.target_domain, cfg.sampling,
       seed_target(ctx)},
      {"test", la::Role::test, cfg.target_domain, grid, seed_eval(ctx)},
      {"oracle", la::Role::oracle, cfg.target_domain, grid, seed_eval(ctx)},
  };

  // The test/oracle pair is built by one call; collect staleness first.
  std::vector<bool> fresh;
  for (const auto& s : specs) {
    const auto expect = la::dataset_config_hash(s.role, s.domain, s.sampling,
                                                s.seed);
    fresh.push_back(
        dataset_up_to_date(ctx, ctx.paths.dataset(s.name), expect));
  }

  auto emit = [&](const la::Dataset& ds, const std::string& name) {
    la::save_dataset(ds, ctx.paths.dataset(name));
    log_line(ctx, "gen-data",
             name + ": wrote " + std::to_string(ds.total_samples()) +
                 " samples");
  };

  if (fresh[0]) {
    log_line(ctx, "gen-data", "source: up to date, skipping");
  } else {
    emit(la::build_source_dataset(cfg.source_domain, cfg.m_tolerance_lenses,
                                  cfg.sampling, seed_source(ctx),
                                  ctx.workers),
         "source");
  }
  if (fresh[1]) {
    log_line(ctx, "gen-data", "source_no_tol: up to date, skipping");
  } else {
    emit(la::build_source_dataset(cfg.source_domain, 0, cfg.sampling,
                                  seed_source_no_tol(ctx), ctx.workers),
         "source_no_tol");
  }
  if (fresh[2]) {
    log_line(ctx, "gen-data", "target: up to date, skipping");
  } else {
    emit(la::build_target_dataset(cfg.target_domain, cfg.sampling,
                                  seed_target(ctx), ctx.workers),
         "target");
  }
  if (fresh[3] && fresh[4]) {
    log_line(ctx, "gen-data", "test, oracle: up to date, skipping");
  } else {
    auto pair = la::build_eval_datasets(cfg.target_domain, cfg.n_test,
                                        cfg.n_oracle, cfg.sampling,
                                        seed_eval(ctx), ctx.workers);
    emit(pair.first, "test");
    emit(pair.second, "oracle");
  }
}

// ---------------------------------------------------------------------------
// Stage stamps: a stage output is current when the digest of everything that
// determines it (options, seeds, input content) matches the stored one.

std::string transform_stamp(const Context& ctx, la::PresetKind k,
                            const std::string& src_hash,
                            const std::string& trg_hash) {
  const la::json j{{"preset", la::preset_slug(k)},
                   {"generator", la::to_json(ctx.cfg.generator)},
                   {"critic", ctx.cfg.critic.base_channels},
                   {"train", la::to_json(ctx.cfg)["transform"]["train"]},
                   {"seed", ctx.cfg.global_seed},
                   {"src", src_hash},
                   {"trg", trg_hash}};
  return la::fnv1a_hex(j.dump());
}

std::optional<std::string> checkpoint_stamp(const fs::path& path) {
  if (!fs::exists(path)) return std::nullopt;
  try {
    return la::nn::load_checkpoint(path).header.at("stamp")
        .get<std::string>();
  } catch (const la::Error&) {
    return std::nullopt;
  } catch (const la::json::exception&) {
    return std::nullopt;
  }
}

const std::string& source_name_for(la::PresetKind k) {
  static const std::string with_tol = "source", no_tol = "source_no_tol";
  return k == la::PresetKind::da3 ? with_tol : no_tol;
}

const la::Dataset& da_source_from_cache(Context& ctx, la::PresetKind k) {
  return k == la::PresetKind::da3 ? source_ds(ctx) : source_no_tol_ds(ctx);
}

void write_transform_curve(const fs::path& path,
                           const la::TransformTrainResult& res) {
  std::ostringstream os;
  for (const auto& p : res.curve)
    os << la::json{{"iteration", p.iteration},
                   {"l_recon", p.l_recon},
                   {"l_gen_style", p.l_gen_style},
                   {"l_disc", p.l_disc},
                   {"vq_codebook", p.vq_codebook},
                   {"vq_commit", p.vq_commit},
                   {"codes_in_use", p.codes_in_use}}
              .dump()
       << "\n";
  la::write_text(path, os.str());
}

void cmd_train_transform(Context& ctx,
                         const std::vector<la::PresetKind>& filter) {
  bool any = false;
  for (la::PresetKind k : filter) {
    if (!la::preset_is_domain_adaptive(k)) continue;
    any = true;
    const std::string src_hash = manifest_content_hash(
        ctx.paths.dataset(source_name_for(k)), "gen-data");
    const std::string trg_hash =
        manifest_content_hash(ctx.paths.dataset("target"), "gen-data");
    const std::string stamp = transform_stamp(ctx, k, src_hash, trg_hash);
    const fs::path ckpt = ctx.paths.transform_ckpt(k);
    if (checkpoint_stamp(ckpt) == stamp) {
      log_line(ctx, "train-transform",
               la::preset_slug(k) + ": up to date, skipping");
      continue;
    }

    la::GeneratorModel gen(
        ctx.cfg.generator,
        la::preset_generator_seed(ctx.cfg.global_seed, k));
    la::StyleDiscriminator disc(
        ctx.cfg.critic, la::preset_critic_seed(ctx.cfg.global_seed, k));
    la::TransformTrainOptions opts = ctx.cfg.transform_train;
    opts.seed = la::preset_transform_seed(ctx.cfg.global_seed, k);
    const auto res =
        la::train_transform(gen, disc, da_source_from_cache(ctx, k),
                            target_ds(ctx), opts);

    auto tensors = gen.named_state("gen.");
    const auto dt = disc.named_state("disc.");
    tensors.insert(tensors.end(), dt.begin(), dt.end());
    fs::create_directories(ckpt.parent_path());
    la::nn::save_checkpoint(ckpt,
                            la::json{{"kind", "style_transform"},
                                     {"preset", la::preset_slug(k)},
                                     {"stamp", stamp},
                                     {"generator",
                                      la::to_json(ctx.cfg.generator)},
                                     {"critic_base_channels",
                                      ctx.cfg.critic.base_channels}},
                            tensors);
    write_transform_curve(ctx.paths.transform_curve(k), res);
    log_line(ctx, "train-transform",
             la::preset_slug(k) + ": trained generator (" +
                 std::to_string(opts.iterations) + " iterations)");
  }
  if (!any)
    log_line(ctx, "train-transform",
             "no domain-adaptive preset selected; nothing to do");
}

void cmd_translate(Context& ctx, const std::vector<la::PresetKind>& filter) {
  bool any = false;
  for (la::PresetKind k : filter) {
    if (!la::preset_is_domain_adaptive(k)) continue;
    any = true;
    const fs::path ckpt = ctx.paths.transform_ckpt(k);
    const auto gen_stamp = checkpoint_stamp(ckpt);
    if (!gen_stamp)
      throw la::DependencyError("missing generator checkpoint " +
                                ckpt.string() + "; run train-transform first");
    const std::string src_hash = manifest_content_hash(
        ctx.paths.dataset(source_name_for(k)), "gen-data");
    const la::json stamp_doc{{"generator", *gen_stamp}, {"src", src_hash}};
    const std::string stamp = la::fnv1a_hex(stamp_doc.dump());

    const fs::path stamp_path = ctx.paths.s2t_stamp(k);
    if (fs::exists(stamp_path) &&
        fs::exists(ctx.paths.s2t_dir(k) / "manifest.json")) {
      try {
        if (la::json::parse(la::read_text(stamp_path)).at("stamp") == stamp) {
          log_line(ctx, "translate",
                   la::preset_slug(k) + ": up to date, skipping");
          continue;
        }
      } catch (const la::json::exception&) {
      }
    }

    const auto loaded = la::nn::load_checkpoint(ckpt);
    la::GeneratorModel gen(
        la::generator_config_from_json(loaded.header.at("generator")),
        la::preset_generator_seed(ctx.cfg.global_seed, k));
    la::nn::restore_tensors(loaded, gen.named_state("gen."));

    const la::Dataset s2t =
        la::translate_dataset(gen, da_source_from_cache(ctx, k));
    la::save_dataset(s2t, ctx.paths.s2t_dir(k));
    la::write_text(stamp_path, la::json{{"stamp", stamp}}.dump(2) + "\n");
    log_line(ctx, "translate",
             la::preset_slug(k) + ": restyled " +
                 std::to_string(s2t.total_samples()) + " samples");
  }
  if (!any)
    log_line(ctx, "translate",
             "no domain-adaptive preset selected; nothing to do");
}

// ---------------------------------------------------------------------------
// train: one regressor per preset.

std::string model_stamp(const Context& ctx, la::PresetKind k,
                        const std::vector<std::string>& input_hashes) {
  const auto full = la::to_json(ctx.cfg);
  const la::json j{{"preset", la::preset_slug(k)},
                   {"model", full["aligner"]["model"]},
                   {"train", full["aligner"]["train"]},
                   {"degradation", full["degradation"]},
                   {"sparse_factor", ctx.cfg.sparse_factor},
                   {"seed", ctx.cfg.global_seed},
                   {"inputs", input_hashes}};
  return la::fnv1a_hex(j.dump());
}

void write_model_curve(const fs::path& path,
                       const la::AlignerTrainResult& res) {
  std::ostringstream os;
  for (const auto& p : res.curve)
    os << la::json{{"iteration", p.iteration},
                   {"l_reg", p.l_reg},
                   {"l_pix", p.l_pix},
                   {"l_adv_E", p.l_adv_e},
                   {"l_adv_D", p.l_adv_d},
                   {"lr", p.lr}}
              .dump()
       << "\n";
  la::write_text(path, os.str());
}

void cmd_train(Context& ctx, const std::vector<la::PresetKind>& filter) {
  for (la::PresetKind k : filter) {
    std::vector<std::string> input_hashes;
    if (la::preset_is_domain_adaptive(k)) {
      input_hashes.push_back(manifest_content_hash(
          ctx.paths.dataset(source_name_for(k)), "gen-data"));
      input_hashes.push_back(
          manifest_content_hash(ctx.paths.s2t_dir(k), "translate"));
    } else if (k == la::PresetKind::on_device ||
               k == la::PresetKind::on_device_sparse) {
      input_hashes.push_back(
          manifest_content_hash(ctx.paths.dataset("oracle"), "gen-data"));
    } else {
      input_hashes.push_back(manifest_content_hash(
          ctx.paths.dataset(source_name_for(k) == "source" ||
                                    k == la::PresetKind::simulation
                                ? "source"
                                : "source_no_tol"),
          "gen-data"));
    }
    const std::string stamp = model_stamp(ctx, k, input_hashes);
    const fs::path ckpt = ctx.paths.model_ckpt(k);
    if (checkpoint_stamp(ckpt) == stamp) {
      log_line(ctx, "train", la::preset_slug(k) + ": up to date, skipping");
      continue;
    }

    la::AlignerModel model(ctx.cfg.aligner,
                           la::preset_model_seed(ctx.cfg.global_seed, k));
    la::AlignerTrainOptions opts = ctx.cfg.align_train;
    opts.seed = la::preset_train_seed(ctx.cfg.global_seed, k);

    la::AlignerTrainResult res;
    if (la::preset_is_domain_adaptive(k)) {
      const la::Dataset s2t = la::load_dataset(ctx.paths.s2t_dir(k));
      res = la::train_da3(model, da_source_from_cache(ctx, k), s2t, opts);
    } else {
      la::PipelineInputs in;
      const la::Dataset* oracle = nullptr;
      const la::Dataset* src = nullptr;
      const la::Dataset* no_tol = nullptr;
      if (k == la::PresetKind::on_device || k == la::PresetKind::on_device_sparse)
        oracle = &oracle_ds(ctx);
      if (k == la::PresetKind::simulation) src = &source_ds(ctx);
      if (k == la::PresetKind::simulation_no_tol)
        no_tol = &source_no_tol_ds(ctx);
      in.oracle = oracle;
      in.source = src;
      in.source_no_tol = no_tol;
      const la::Dataset train_set =
          la::supervised_training_set(k, in, ctx.cfg.sparse_factor);
      res = la::train_supervised(model, train_set, opts);
    }

    fs::create_directories(ckpt.parent_path());
    la::nn::save_checkpoint(ckpt,
                            la::json{{"kind", "aligner"},
                                     {"preset", la::preset_slug(k)},
                                     {"stamp", stamp},
                                     {"model", la::to_json(ctx.cfg.aligner)}},
                            model.named_state());
    write_model_curve(ctx.paths.model_curve(k), res);
    log_line(ctx, "train",
             la::preset_slug(k) + ": trained regressor (" +
                 std::to_string(opts.iterations) + " iterations)");
  }
}

// ---------------------------------------------------------------------------
// eval + report.

void cmd_eval(Context& ctx, const std::vector<la::PresetKind>& filter) {
  const la::Dataset& test = test_ds(ctx);
  const auto pool = la::flatten_samples(test);
  for (la::PresetKind k : filter) {
    const fs::path ckpt = ctx.paths.model_ckpt(k);
    if (!fs::exists(ckpt))
      throw la::DependencyError("missing model checkpoint " + ckpt.string() +
                                "; run train first");
    const auto loaded = la::nn::load_checkpoint(ckpt);
    la::AlignerModel model(
        la::aligner_config_from_json(loaded.header.at("model")),
        la::preset_model_seed(ctx.cfg.global_seed, k));
    la::nn::restore_tensors(loaded, model.named_state());

    const auto preds = la::predict_batch(model, pool);
    const auto report = la::evaluate_from_predictions(test, preds);

    // Single-step adjustment success at the published threshold scaled to
    // this scan range (2 um at a 30 um range).
    const double threshold = 2.0 * (ctx.cfg.sampling.range_um / 30.0);
    std::size_t i = 0;
    const double success = la::adjust_success_rate_with(
        [&](const la::Sample&) { return preds[i++]; }, test, threshold);

    const fs::path dir = ctx.paths.report_dir(k);
    fs::create_directories(dir);
    la::write_report_json(report, dir / "report.json");
    la::write_per_lens_csv(report, dir / "per_lens.csv");
    const auto hm = la::error_heatmap(report, test.sampling);
    la::write_heatmap_csv(hm, dir / "heatmap.csv");
    la::write_heatmap_png(hm, dir / "heatmap.png");
    la::write_text(dir / "adjust.json",
                   la::json{{"threshold_um", threshold},
                            {"success_rate", success}}
                           .dump(2) +
                       "\n");
    std::ostringstream msg;
    msg << la::preset_slug(k) << ": mae_avg " << std::setprecision(4)
        << report.mae_avg << " um, adjust success "
        << static_cast<int>(success * 100.0 + 0.5) << "%";
    log_line(ctx, "eval", msg.str());
  }
}

void cmd_report(Context& ctx) {
  std::vector<std::pair<std::string, la::EvalReport>> rows;
  for (la::PresetKind k : la::kAllPresets) {
    const fs::path p = ctx.paths.report_dir(k) / "report.json";
    if (!fs::exists(p)) continue;
    rows.emplace_back(la::preset_name(k, ctx.cfg.n_oracle),
                      la::read_report_json(p));
  }
  if (rows.empty())
    throw la::DependencyError("no evaluation reports under " +
                              (ctx.paths.root / "reports").string() +
                              "; run eval first");
  la::write_metrics_csv(rows, ctx.paths.metrics_csv());
  log_line(ctx, "report",
           "wrote " + ctx.paths.metrics_csv().string() + " (" +
               std::to_string(rows.size()) + " rows)");
}

// ---------------------------------------------------------------------------
// Command plumbing.

int dispatch(Context& ctx, const std::string& command,
             const std::vector<la::PresetKind>& filter) {
  if (command == "gen-data") {
    cmd_gen_data(ctx);
  } else if (command == "train-transform") {
    cmd_train_transform(ctx, filter);
  } else if (command == "translate") {
    cmd_translate(ctx, filter);
  } else if (command == "train") {
    cmd_train(ctx, filter);
  } else if (command == "eval") {
    cmd_eval(ctx, filter);
  } else if (command == "report") {
    cmd_report(ctx);
  } else if (command == "run-all") {
    const std::vector<la::PresetKind> all(la::kAllPresets.begin(),
                                          la::kAllPresets.end());
    cmd_gen_data(ctx);
    cmd_train_transform(ctx, all);
    cmd_translate(ctx, all);
    cmd_train(ctx, all);
    cmd_eval(ctx, all);
    cmd_report(ctx);
  } else {
    throw la::InvalidConfigError("unknown command: " + command);
  }
  return 0;
}

int exit_code_for(const la::Error& e) {
  if (dynamic_cast<const la::DependencyError*>(&e) ||
      dynamic_cast<const la::MissingFileError*>(&e))
    return 3;
  if (dynamic_cast<const la::SchemaError*>(&e) ||
      dynamic_cast<const la::InvalidConfigError*>(&e) ||
      dynamic_cast<const la::ChecksumError*>(&e))
    return 2;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "lensalign: simulated active-alignment laboratory.\n"
      "Stages: gen-data -> train-transform -> translate -> train -> eval -> "
      "report (run-all chains everything)."};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  std::optional<std::string> preset_arg;
  std::string determinism = "strict";
  app.add_option("--config", config_path, "Experiment config (JSON)")
      ->required();
  app.add_option("--seed", seed_override, "Override global_seed");
  app.add_option("--out", out_override, "Override output_dir");
  app.add_option("--preset", preset_arg,
                 "Restrict the stage to one pipeline preset");
  app.add_option("--determinism", determinism,
                 "strict: single worker; fast: all cores")
      ->check(CLI::IsMember({"strict", "fast"}));

  for (const char* name :
       {"gen-data", "train-transform", "translate", "train", "eval", "report",
        "run-all"})
    app.add_subcommand(name);

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    Context ctx;
    ctx.cfg = la::load_config(config_path);
    if (seed_override) ctx.cfg.global_seed = *seed_override;
    if (out_override) ctx.cfg.output_dir = *out_override;
    ctx.cfg.validate();
    ctx.paths.root = fs::path(ctx.cfg.output_dir);
    ctx.workers =
        determinism == "fast"
            ? std::max(1u, std::thread::hardware_concurrency())
            : 1;

    fs::create_directories(ctx.paths.root);
    la::save_config(ctx.cfg, ctx.paths.resolved_config());

    std::vector<la::PresetKind> filter(la::kAllPresets.begin(),
                                       la::kAllPresets.end());
    if (preset_arg)
      filter = {la::preset_from_string(*preset_arg)};

    log_line(ctx, command, "start (seed " +
                               std::to_string(ctx.cfg.global_seed) +
                               ", scenario " + ctx.cfg.scenario + ")");
    const int rc = dispatch(ctx, command, filter);
    log_line(ctx, command, "done");
    return rc;
  } catch (const la::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
