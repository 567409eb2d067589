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

#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "lensalign/aligner.hpp"
#include "lensalign/common.hpp"
#include "lensalign/dataset.hpp"
#include "lensalign/eval.hpp"
#include "lensalign/transform.hpp"

namespace lensalign {

/// A config file mentions a key the schema does not define.
struct UnknownKeyError : SchemaError {
  using SchemaError::SchemaError;
};

/// A config value has the wrong JSON type for its key.
struct TypeMismatchError : SchemaError {
  using SchemaError::SchemaError;
};

// ---------------------------------------------------------------------------
// Complete experiment description. A config file names a scenario and may
// override any field; everything else comes from the scenario preset, and the
// fully resolved result is echoed next to the outputs so any run can be
// reproduced from that one file.

struct ExperimentConfig {
  std::string scenario;  // security_like | smartphone_like | desk
  std::uint64_t global_seed = 1;
  std::string output_dir = "out";

  /// Scan geometry shared by every labeled set; n_random counts the
  /// unlabeled captures of the new module.
  SamplingSpec sampling;
  int m_tolerance_lenses = 3;  // perturbed units in the full source set
  int n_test = 4;
  int n_oracle = 2;

  DomainConfig source_domain;
  DomainConfig target_domain;

  GeneratorConfig generator;
  StyleDiscriminatorConfig critic;
  TransformTrainOptions transform_train;
  AlignerConfig aligner;
  AlignerTrainOptions align_train;  // carries the degradation spec

  int sparse_factor = 5;  // scan-pitch multiplier for the sparse baseline

  void validate() const {
    if (scenario != "security_like" && scenario != "smartphone_like" &&
        scenario != "desk")
      throw InvalidConfigError("config: unknown scenario \"" + scenario +
                               "\"");
    if (output_dir.empty())
      throw InvalidConfigError("config: output_dir must not be empty");
    const int grid = sampling.grid_count();
    if (m_tolerance_lenses < 0)
      throw InvalidConfigError(
          "config: m_tolerance_lenses must be non-negative");
    if (n_test < 1 || n_oracle < 1)
      throw InvalidConfigError("config: n_test and n_oracle must be >= 1");
    if (sampling.n_random < 1)
      throw InvalidConfigError("config: n_random must be >= 1");
    if (4 * sampling.n_random > grid)
      throw InvalidConfigError(
          "config: n_random must be at most a quarter of the grid size (" +
          std::to_string(grid / 4) + ")");
    source_domain.validate();
    target_domain.validate();
    if (source_domain.image_side != target_domain.image_side)
      throw InvalidConfigError(
          "config: source and target domains must share one image_side");
    generator.validate();
    critic.validate();
    transform_train.validate();
    aligner.validate();
    align_train.validate();
    if (sparse_factor < 2)
      throw InvalidConfigError("config: sparse_factor must be >= 2");
    if (sampling.grid_halfwidth() / sparse_factor < 1)
      throw InvalidConfigError(
          "config: sparse_factor leaves the coarse scan without off-center "
          "positions");
  }
};

// ---------------------------------------------------------------------------
// Scenario presets. The two full-size scenarios mirror the published scan
// tables (security: +-30 um at 2 um pitch, 70 px; smartphone: +-15 um at
// 1 um pitch, 50 px); the desk scenario shrinks every knob until the whole
// six-way comparison fits interactive runtimes.

inline ExperimentConfig scenario_preset(const std::string& name) {
  ExperimentConfig c;
  c.scenario = name;

  // The two domains render the same optics; the gap is the camera pipeline,
  // applied on the target side and absent (linear output) on the source side.
  c.source_domain.label = DomainLabel::source_clean;
  c.target_domain.label = DomainLabel::target;
  IspConfig isp;
  isp.gamma_lo = 1.7;
  isp.gamma_hi = 1.9;
  isp.scale_lo = 0.97;
  isp.scale_hi = 1.03;
  isp.noise_sigma = 0.02;
  isp.quantize_bits = 8;
  c.source_domain.isp = isp;
  c.target_domain.isp = isp;

  if (name == "security_like") {
    c.sampling = {30.0, 2.0, 100};
    c.source_domain.image_side = 70;
    c.target_domain.image_side = 70;
    c.m_tolerance_lenses = 10;
    c.aligner.label_scale_um = 30.0;
  } else if (name == "smartphone_like") {
    c.sampling = {15.0, 1.0, 100};
    c.source_domain.image_side = 50;
    c.target_domain.image_side = 50;
    c.m_tolerance_lenses = 10;
    c.aligner.label_scale_um = 15.0;
  } else if (name == "desk") {
    c.sampling = {15.0, 3.0, 30};
    c.source_domain.image_side = 48;
    c.target_domain.image_side = 48;
    c.m_tolerance_lenses = 3;
    c.aligner.label_scale_um = 15.0;

    // Desk-size networks and schedules.
    c.aligner.base_channels = 8;
    c.aligner.feat_dim = 128;
    c.aligner.head_hidden = 64;
    c.generator.base_channels = 8;
    c.generator.code_dim = 32;
    c.generator.codebook_size = 128;
    c.critic.base_channels = 8;
    c.transform_train.iterations = 240;
    c.align_train.iterations = 480;
  } else {
    throw InvalidConfigError("config: unknown scenario \"" + name + "\"");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Strict JSON loading: unknown keys, wrong types and constraint violations
// each raise their own error type, always naming the offending key.

namespace detail {

inline std::string key_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void check_keys(const json& j, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw TypeMismatchError("config: expected an object at \"" +
                            (path.empty() ? std::string("<root>") : path) +
                            "\"");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known)
      throw UnknownKeyError("config: unknown key \"" +
                            key_path(path, item.key()) + "\"");
  }
}

inline void read_field(const json& j, const std::string& path,
                       const char* key, double& into) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number())
    throw TypeMismatchError("config: expected a number for \"" +
                            key_path(path, key) + "\"");
  into = it->get<double>();
}

inline void read_field(const json& j, const std::string& path,
                       const char* key, int& into) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_integer())
    throw TypeMismatchError("config: expected an integer for \"" +
                            key_path(path, key) + "\"");
  into = it->get<int>();
}

inline void read_field(const json& j, const std::string& path,
                       const char* key, std::uint64_t& into) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number_unsigned() && !(it->is_number_integer() &&
                                     it->get<std::int64_t>() >= 0))
    throw TypeMismatchError("config: expected a non-negative integer for \"" +
                            key_path(path, key) + "\"");
  into = it->get<std::uint64_t>();
}

inline void read_field(const json& j, const std::string& path,
                       const char* key, bool& into) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_boolean())
    throw TypeMismatchError("config: expected a boolean for \"" +
                            key_path(path, key) + "\"");
  into = it->get<bool>();
}

inline void read_field(const json& j, const std::string& path,
                       const char* key, std::string& into) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_string())
    throw TypeMismatchError("config: expected a string for \"" +
                            key_path(path, key) + "\"");
  into = it->get<std::string>();
}

inline void read_field(const json& j, const std::string& path,
                       const char* key, std::vector<int>& into) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array())
    throw TypeMismatchError("config: expected an array for \"" +
                            key_path(path, key) + "\"");
  std::vector<int> out;
  for (const auto& v : *it) {
    if (!v.is_number_integer())
      throw TypeMismatchError("config: expected integers in \"" +
                              key_path(path, key) + "\"");
    out.push_back(v.get<int>());
  }
  into = std::move(out);
}

inline void apply_sampling(const json& j, const std::string& path,
                           SamplingSpec& s) {
  check_keys(j, path, {"range_um", "step_um"});
  read_field(j, path, "range_um", s.range_um);
  read_field(j, path, "step_um", s.step_um);
}

inline void apply_sizes(const json& j, const std::string& path,
                        ExperimentConfig& c) {
  check_keys(j, path,
             {"m_tolerance_lenses", "n_test", "n_oracle", "n_random"});
  read_field(j, path, "m_tolerance_lenses", c.m_tolerance_lenses);
  read_field(j, path, "n_test", c.n_test);
  read_field(j, path, "n_oracle", c.n_oracle);
  read_field(j, path, "n_random", c.sampling.n_random);
}

inline void apply_psf(const json& j, const std::string& path,
                      PsfFamilyParams& p) {
  check_keys(j, path,
             {"base_sigma_px", "astig_coeff_px_per_um",
              "coma_coeff_px_per_um", "smoothing_extra_px"});
  read_field(j, path, "base_sigma_px", p.base_sigma_px);
  read_field(j, path, "astig_coeff_px_per_um", p.astig_coeff_px_per_um);
  read_field(j, path, "coma_coeff_px_per_um", p.coma_coeff_px_per_um);
  read_field(j, path, "smoothing_extra_px", p.smoothing_extra_px);
}

inline void apply_isp(const json& j, const std::string& path, IspConfig& c) {
  check_keys(j, path,
             {"gamma_lo", "gamma_hi", "scale_lo", "scale_hi", "noise_sigma",
              "quantize_bits", "extra_blur_sigma"});
  read_field(j, path, "gamma_lo", c.gamma_lo);
  read_field(j, path, "gamma_hi", c.gamma_hi);
  read_field(j, path, "scale_lo", c.scale_lo);
  read_field(j, path, "scale_hi", c.scale_hi);
  read_field(j, path, "noise_sigma", c.noise_sigma);
  read_field(j, path, "quantize_bits", c.quantize_bits);
  read_field(j, path, "extra_blur_sigma", c.extra_blur_sigma);
}

inline void apply_domain(const json& j, const std::string& path,
                         DomainConfig& d, bool is_source) {
  check_keys(j, path, {"image_side", "apply_isp", "psf", "isp"});
  read_field(j, path, "image_side", d.image_side);
  bool apply = d.label != DomainLabel::source_clean;
  read_field(j, path, "apply_isp", apply);
  d.label = !apply ? DomainLabel::source_clean
                   : (is_source ? DomainLabel::source_isp
                                : DomainLabel::target);
  if (j.contains("psf")) apply_psf(j.at("psf"), key_path(path, "psf"), d.psf);
  if (j.contains("isp")) apply_isp(j.at("isp"), key_path(path, "isp"), d.isp);
}

inline void apply_generator(const json& j, const std::string& path,
                            GeneratorConfig& g) {
  check_keys(j, path,
             {"base_channels", "code_dim", "codebook_size", "gn_groups",
              "commitment_beta"});
  read_field(j, path, "base_channels", g.base_channels);
  read_field(j, path, "code_dim", g.code_dim);
  read_field(j, path, "codebook_size", g.codebook_size);
  read_field(j, path, "gn_groups", g.gn_groups);
  read_field(j, path, "commitment_beta", g.commitment_beta);
}

inline void apply_transform_train(const json& j, const std::string& path,
                                  TransformTrainOptions& t) {
  check_keys(j, path,
             {"iterations", "batch_size", "lr_g", "lr_d", "lambda_recon",
              "log_every"});
  read_field(j, path, "iterations", t.iterations);
  read_field(j, path, "batch_size", t.batch_size);
  read_field(j, path, "lr_g", t.lr_g);
  read_field(j, path, "lr_d", t.lr_d);
  read_field(j, path, "lambda_recon", t.lambda_recon);
  read_field(j, path, "log_every", t.log_every);
}

inline void apply_aligner_model(const json& j, const std::string& path,
                                AlignerConfig& a) {
  check_keys(j, path,
             {"in_channels", "base_channels", "feat_dim", "head_hidden",
              "gn_groups", "dropout", "label_scale_um"});
  read_field(j, path, "in_channels", a.in_channels);
  read_field(j, path, "base_channels", a.base_channels);
  read_field(j, path, "feat_dim", a.feat_dim);
  read_field(j, path, "head_hidden", a.head_hidden);
  read_field(j, path, "gn_groups", a.gn_groups);
  read_field(j, path, "dropout", a.dropout);
  read_field(j, path, "label_scale_um", a.label_scale_um);
}

inline void apply_aligner_train(const json& j, const std::string& path,
                                AlignerTrainOptions& t) {
  check_keys(j, path,
             {"iterations", "batch_size", "lr", "lr_domain", "lambda_pix",
              "lambda_adv", "shared_augment_params", "lr_decay_every_epochs",
              "lr_decay_factor", "log_every"});
  read_field(j, path, "iterations", t.iterations);
  read_field(j, path, "batch_size", t.batch_size);
  read_field(j, path, "lr", t.lr);
  read_field(j, path, "lr_domain", t.lr_domain);
  read_field(j, path, "lambda_pix", t.lambda_pix);
  read_field(j, path, "lambda_adv", t.lambda_adv);
  read_field(j, path, "shared_augment_params", t.shared_augment_params);
  read_field(j, path, "lr_decay_every_epochs", t.lr_decay_every_epochs);
  read_field(j, path, "lr_decay_factor", t.lr_decay_factor);
  read_field(j, path, "log_every", t.log_every);
}

inline void apply_degradation(const json& j, const std::string& path,
                              DegradationSpec& d) {
  check_keys(j, path,
             {"enabled_types", "apply_probability", "jpeg_q_lo", "jpeg_q_hi",
              "blur_kernel_choices", "blur_sigma_lo", "blur_sigma_hi",
              "noise_sigma_lo", "noise_sigma_hi", "mask_ratio_lo",
              "mask_ratio_hi"});
  if (j.contains("enabled_types")) {
    const auto& arr = j.at("enabled_types");
    if (!arr.is_array())
      throw TypeMismatchError("config: expected an array for \"" +
                              key_path(path, "enabled_types") + "\"");
    std::vector<DegradationType> types;
    for (const auto& v : arr) {
      if (!v.is_string())
        throw TypeMismatchError("config: expected strings in \"" +
                                key_path(path, "enabled_types") + "\"");
      try {
        types.push_back(degradation_type_from_string(v.get<std::string>()));
      } catch (const Error&) {
        throw InvalidConfigError("config: bad value \"" +
                                 v.get<std::string>() + "\" in \"" +
                                 key_path(path, "enabled_types") + "\"");
      }
    }
    d.enabled_types = std::move(types);
  }
  read_field(j, path, "apply_probability", d.apply_probability);
  read_field(j, path, "jpeg_q_lo", d.jpeg_q_lo);
  read_field(j, path, "jpeg_q_hi", d.jpeg_q_hi);
  read_field(j, path, "blur_kernel_choices", d.blur_kernel_choices);
  read_field(j, path, "blur_sigma_lo", d.blur_sigma_lo);
  read_field(j, path, "blur_sigma_hi", d.blur_sigma_hi);
  read_field(j, path, "noise_sigma_lo", d.noise_sigma_lo);
  read_field(j, path, "noise_sigma_hi", d.noise_sigma_hi);
  read_field(j, path, "mask_ratio_lo", d.mask_ratio_lo);
  read_field(j, path, "mask_ratio_hi", d.mask_ratio_hi);
}

inline void apply_transform(const json& j, const std::string& path,
                            ExperimentConfig& c) {
  check_keys(j, path, {"generator", "critic", "train"});
  if (j.contains("generator"))
    apply_generator(j.at("generator"), key_path(path, "generator"),
                    c.generator);
  if (j.contains("critic")) {
    const auto cp = key_path(path, "critic");
    check_keys(j.at("critic"), cp, {"base_channels"});
    read_field(j.at("critic"), cp, "base_channels", c.critic.base_channels);
  }
  if (j.contains("train"))
    apply_transform_train(j.at("train"), key_path(path, "train"),
                          c.transform_train);
}

inline void apply_aligner(const json& j, const std::string& path,
                          ExperimentConfig& c) {
  check_keys(j, path, {"model", "train"});
  if (j.contains("model"))
    apply_aligner_model(j.at("model"), key_path(path, "model"), c.aligner);
  if (j.contains("train"))
    apply_aligner_train(j.at("train"), key_path(path, "train"),
                        c.align_train);
}

}  // namespace detail

/// Parse a config document: the named scenario supplies every default, then
/// the remaining keys override. Does not touch the filesystem.
inline ExperimentConfig config_from_json(const json& j) {
  detail::check_keys(
      j, "",
      {"scenario", "global_seed", "output_dir", "sampling", "sizes",
       "source_domain", "target_domain", "transform", "aligner",
       "degradation", "sparse_factor"});
  std::string scenario;
  detail::read_field(j, "", "scenario", scenario);
  if (scenario.empty())
    throw InvalidConfigError(
        "config: \"scenario\" is required (security_like, smartphone_like "
        "or desk)");
  ExperimentConfig c = scenario_preset(scenario);

  detail::read_field(j, "", "global_seed", c.global_seed);
  detail::read_field(j, "", "output_dir", c.output_dir);
  if (j.contains("sampling"))
    detail::apply_sampling(j.at("sampling"), "sampling", c.sampling);
  if (j.contains("sizes")) detail::apply_sizes(j.at("sizes"), "sizes", c);
  if (j.contains("source_domain"))
    detail::apply_domain(j.at("source_domain"), "source_domain",
                         c.source_domain, true);
  if (j.contains("target_domain"))
    detail::apply_domain(j.at("target_domain"), "target_domain",
                         c.target_domain, false);
  if (j.contains("transform"))
    detail::apply_transform(j.at("transform"), "transform", c);
  if (j.contains("aligner"))
    detail::apply_aligner(j.at("aligner"), "aligner", c);
  if (j.contains("degradation"))
    detail::apply_degradation(j.at("degradation"), "degradation",
                              c.align_train.degradation);
  detail::read_field(j, "", "sparse_factor", c.sparse_factor);

  c.validate();
  return c;
}

/// Emit the full resolved schema; config_from_json(to_json(c)) == c.
inline json to_json(const ExperimentConfig& c) {
  auto domain = [](const DomainConfig& d) {
    return json{{"image_side", d.image_side},
                {"apply_isp", d.label != DomainLabel::source_clean},
                {"psf",
                 {{"base_sigma_px", d.psf.base_sigma_px},
                  {"astig_coeff_px_per_um", d.psf.astig_coeff_px_per_um},
                  {"coma_coeff_px_per_um", d.psf.coma_coeff_px_per_um},
                  {"smoothing_extra_px", d.psf.smoothing_extra_px}}},
                {"isp",
                 {{"gamma_lo", d.isp.gamma_lo},
                  {"gamma_hi", d.isp.gamma_hi},
                  {"scale_lo", d.isp.scale_lo},
                  {"scale_hi", d.isp.scale_hi},
                  {"noise_sigma", d.isp.noise_sigma},
                  {"quantize_bits", d.isp.quantize_bits},
                  {"extra_blur_sigma", d.isp.extra_blur_sigma}}}};
  };
  json types = json::array();
  for (DegradationType t : c.align_train.degradation.enabled_types)
    types.push_back(to_string(t));
  return {
      {"scenario", c.scenario},
      {"global_seed", c.global_seed},
      {"output_dir", c.output_dir},
      {"sampling",
       {{"range_um", c.sampling.range_um}, {"step_um", c.sampling.step_um}}},
      {"sizes",
       {{"m_tolerance_lenses", c.m_tolerance_lenses},
        {"n_test", c.n_test},
        {"n_oracle", c.n_oracle},
        {"n_random", c.sampling.n_random}}},
      {"source_domain", domain(c.source_domain)},
      {"target_domain", domain(c.target_domain)},
      {"transform",
       {{"generator",
         {{"base_channels", c.generator.base_channels},
          {"code_dim", c.generator.code_dim},
          {"codebook_size", c.generator.codebook_size},
          {"gn_groups", c.generator.gn_groups},
          {"commitment_beta", c.generator.commitment_beta}}},
        {"critic", {{"base_channels", c.critic.base_channels}}},
        {"train",
         {{"iterations", c.transform_train.iterations},
          {"batch_size", c.transform_train.batch_size},
          {"lr_g", c.transform_train.lr_g},
          {"lr_d", c.transform_train.lr_d},
          {"lambda_recon", c.transform_train.lambda_recon},
          {"log_every", c.transform_train.log_every}}}}},
      {"aligner",
       {{"model",
         {{"in_channels", c.aligner.in_channels},
          {"base_channels", c.aligner.base_channels},
          {"feat_dim", c.aligner.feat_dim},
          {"head_hidden", c.aligner.head_hidden},
          {"gn_groups", c.aligner.gn_groups},
          {"dropout", c.aligner.dropout},
          {"label_scale_um", c.aligner.label_scale_um}}},
        {"train",
         {{"iterations", c.align_train.iterations},
          {"batch_size", c.align_train.batch_size},
          {"lr", c.align_train.lr},
          {"lr_domain", c.align_train.lr_domain},
          {"lambda_pix", c.align_train.lambda_pix},
          {"lambda_adv", c.align_train.lambda_adv},
          {"shared_augment_params", c.align_train.shared_augment_params},
          {"lr_decay_every_epochs", c.align_train.lr_decay_every_epochs},
          {"lr_decay_factor", c.align_train.lr_decay_factor},
          {"log_every", c.align_train.log_every}}}}},
      {"degradation",
       {{"enabled_types", types},
        {"apply_probability", c.align_train.degradation.apply_probability},
        {"jpeg_q_lo", c.align_train.degradation.jpeg_q_lo},
        {"jpeg_q_hi", c.align_train.degradation.jpeg_q_hi},
        {"blur_kernel_choices",
         c.align_train.degradation.blur_kernel_choices},
        {"blur_sigma_lo", c.align_train.degradation.blur_sigma_lo},
        {"blur_sigma_hi", c.align_train.degradation.blur_sigma_hi},
        {"noise_sigma_lo", c.align_train.degradation.noise_sigma_lo},
        {"noise_sigma_hi", c.align_train.degradation.noise_sigma_hi},
        {"mask_ratio_lo", c.align_train.degradation.mask_ratio_lo},
        {"mask_ratio_hi", c.align_train.degradation.mask_ratio_hi}}},
      {"sparse_factor", c.sparse_factor}};
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    throw MissingFileError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw SchemaError("config is not valid JSON: " + std::string(e.what()));
  }
  return config_from_json(j);
}

inline void save_config(const ExperimentConfig& c,
                        const std::filesystem::path& path) {
  write_text(path, to_json(c).dump(2) + "\n");
}

/// Stable digest of the resolved configuration (seed and all), used to guard
/// stage idempotence.
inline std::string config_hash(const ExperimentConfig& c) {
  return fnv1a_hex(to_json(c).dump());
}

}  // namespace lensalign
