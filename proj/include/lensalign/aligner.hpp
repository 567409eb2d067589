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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lensalign/common.hpp"
#include "lensalign/dataset.hpp"
#include "lensalign/nn/nn.hpp"
#include "lensalign/transform.hpp"

namespace lensalign {

// ---------------------------------------------------------------------------
// Capture degradation augmentation. Each application picks ONE degradation
// type uniformly among the enabled ones and applies it with freshly drawn
// parameters; this widens the style coverage of the translated captures so
// the regressor cannot overfit one fixed rendering.

enum class DegradationType { jpeg, gaussian_blur, gaussian_noise, random_mask };

inline std::string to_string(DegradationType t) {
  switch (t) {
    case DegradationType::jpeg: return "jpeg";
    case DegradationType::gaussian_blur: return "gaussian_blur";
    case DegradationType::gaussian_noise: return "gaussian_noise";
    case DegradationType::random_mask: return "random_mask";
  }
  throw InvalidInputError("unknown degradation type");
}
inline DegradationType degradation_type_from_string(const std::string& s) {
  if (s == "jpeg") return DegradationType::jpeg;
  if (s == "gaussian_blur") return DegradationType::gaussian_blur;
  if (s == "gaussian_noise") return DegradationType::gaussian_noise;
  if (s == "random_mask") return DegradationType::random_mask;
  throw InvalidConfigError("unknown degradation type: " + s);
}

struct DegradationSpec {
  std::vector<DegradationType> enabled_types = {DegradationType::gaussian_blur};
  double jpeg_q_lo = 0.4, jpeg_q_hi = 0.7;
  std::vector<int> blur_kernel_choices = {3, 5, 7};
  double blur_sigma_lo = 0.5, blur_sigma_hi = 2.0;
  double noise_sigma_lo = 0.02, noise_sigma_hi = 0.08;
  double mask_ratio_lo = 0.05, mask_ratio_hi = 0.20;
  double apply_probability = 0.5;

  void validate() const {
    if (apply_probability < 0.0 || apply_probability > 1.0)
      throw InvalidConfigError("degradation: bad apply_probability");
    if (apply_probability > 0.0 && enabled_types.empty())
      throw InvalidConfigError(
          "degradation: at least one type must be enabled");
    auto in = [](double lo, double hi, double a, double b) {
      return lo <= hi && lo >= a && hi <= b;
    };
    if (!in(jpeg_q_lo, jpeg_q_hi, 0.4, 0.7))
      throw InvalidConfigError("degradation: jpeg quality outside [0.4, 0.7]");
    if (!in(blur_sigma_lo, blur_sigma_hi, 0.5, 2.0))
      throw InvalidConfigError("degradation: blur sigma outside [0.5, 2.0]");
    if (!in(noise_sigma_lo, noise_sigma_hi, 0.02, 0.08))
      throw InvalidConfigError("degradation: noise sigma outside [0.02, 0.08]");
    if (!in(mask_ratio_lo, mask_ratio_hi, 0.05, 0.20))
      throw InvalidConfigError("degradation: mask ratio outside [0.05, 0.20]");
    for (int k : blur_kernel_choices)
      if (k != 3 && k != 5 && k != 7)
        throw InvalidConfigError("degradation: blur kernels must be 3, 5 or 7");
    const bool blur_on =
        std::find(enabled_types.begin(), enabled_types.end(),
                  DegradationType::gaussian_blur) != enabled_types.end();
    if (blur_on && blur_kernel_choices.empty())
      throw InvalidConfigError("degradation: no blur kernel choices");
  }
};

inline json to_json(const DegradationSpec& d) {
  json types = json::array();
  for (auto t : d.enabled_types) types.push_back(to_string(t));
  return {{"enabled_types", types},
          {"jpeg_q_lo", d.jpeg_q_lo},
          {"jpeg_q_hi", d.jpeg_q_hi},
          {"blur_kernel_choices", d.blur_kernel_choices},
          {"blur_sigma_lo", d.blur_sigma_lo},
          {"blur_sigma_hi", d.blur_sigma_hi},
          {"noise_sigma_lo", d.noise_sigma_lo},
          {"noise_sigma_hi", d.noise_sigma_hi},
          {"mask_ratio_lo", d.mask_ratio_lo},
          {"mask_ratio_hi", d.mask_ratio_hi},
          {"apply_probability", d.apply_probability}};
}
inline DegradationSpec degradation_from_json(const json& j) {
  DegradationSpec d;
  d.enabled_types.clear();
  for (const auto& t : j.at("enabled_types"))
    d.enabled_types.push_back(
        degradation_type_from_string(t.get<std::string>()));
  d.jpeg_q_lo = j.at("jpeg_q_lo").get<double>();
  d.jpeg_q_hi = j.at("jpeg_q_hi").get<double>();
  d.blur_kernel_choices =
      j.at("blur_kernel_choices").get<std::vector<int>>();
  d.blur_sigma_lo = j.at("blur_sigma_lo").get<double>();
  d.blur_sigma_hi = j.at("blur_sigma_hi").get<double>();
  d.noise_sigma_lo = j.at("noise_sigma_lo").get<double>();
  d.noise_sigma_hi = j.at("noise_sigma_hi").get<double>();
  d.mask_ratio_lo = j.at("mask_ratio_lo").get<double>();
  d.mask_ratio_hi = j.at("mask_ratio_hi").get<double>();
  d.apply_probability = j.at("apply_probability").get<double>();
  return d;
}

/// Zero a compact block of exactly round(ratio * area) pixels at a uniformly
/// random position. The block is the near-square h x w region that the pixel
/// budget fills row by row (the last row may be partial), so the zeroed count
/// is exact for every ratio.
inline Image mask_random_rectangle(const Image& im, double ratio, Rng& rng) {
  const int side = im.side;
  const long long area = static_cast<long long>(side) * side;
  long long target = std::llround(ratio * static_cast<double>(area));
  target = std::clamp<long long>(target, 1, area);

  int h = std::clamp(
      static_cast<int>(std::llround(std::sqrt(static_cast<double>(target)))),
      1, side);
  int w = static_cast<int>((target + h - 1) / h);
  if (w > side) {
    w = side;
    h = static_cast<int>((target + side - 1) / side);
  }
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(side - h + 1)));
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(side - w + 1)));

  Image out = im;
  long long left = target;
  for (int y = y0; left > 0; ++y) {
    const int run = static_cast<int>(std::min<long long>(w, left));
    for (int x = x0; x < x0 + run; ++x) out.at(y, x) = 0.0f;
    left -= run;
  }
  return out;
}

/// With probability apply_probability, pick one enabled degradation type and
/// apply it with parameters drawn from its range; otherwise return the input
/// unchanged. Draw order: gate, type, then type parameters.
inline Image augment_image(const Image& im, const DegradationSpec& spec,
                           Rng& rng) {
  spec.validate();
  if (!(rng.uniform() < spec.apply_probability)) return im;
  const auto type = spec.enabled_types[static_cast<std::size_t>(
      rng.below(spec.enabled_types.size()))];
  switch (type) {
    case DegradationType::jpeg: {
      const double q = rng.uniform(spec.jpeg_q_lo, spec.jpeg_q_hi);
      return jpeg_roundtrip(im, static_cast<int>(std::lround(q * 100.0)));
    }
    case DegradationType::gaussian_blur: {
      const int k = spec.blur_kernel_choices[static_cast<std::size_t>(
          rng.below(spec.blur_kernel_choices.size()))];
      const double s = rng.uniform(spec.blur_sigma_lo, spec.blur_sigma_hi);
      return gaussian_blur_fixed_kernel(im, k, s);
    }
    case DegradationType::gaussian_noise: {
      const double s = rng.uniform(spec.noise_sigma_lo, spec.noise_sigma_hi);
      Image out = im;
      for (auto& v : out.px)
        v = std::clamp(v + static_cast<float>(rng.normal() * s), 0.0f, 1.0f);
      return out;
    }
    case DegradationType::random_mask: {
      const double r = rng.uniform(spec.mask_ratio_lo, spec.mask_ratio_hi);
      return mask_random_rectangle(im, r, rng);
    }
  }
  throw InvalidInputError("augment_image: unknown type");
}

// ---------------------------------------------------------------------------
// Misalignment regressor. A shared convolutional extractor embeds the
// five-field capture stack into one feature vector; a regression head reads
// out (dx, dy) in normalized units and a domain head scores (as a raw logit)
// which domain a feature vector came from. Dropout lives only inside the two
// heads, so the extractor is deterministic in both modes.

struct AlignerConfig {
  int in_channels = 5;
  int base_channels = 16;
  int feat_dim = 512;
  int head_hidden = 128;
  int gn_groups = 4;
  double dropout = 0.5;
  double label_scale_um = 1.0;  // labels train as label / scale, in [-1, 1]

  void validate() const {
    if (in_channels < 1 || base_channels < 1 || feat_dim < 1 ||
        head_hidden < 1)
      throw InvalidConfigError("aligner: bad layer sizes");
    if (gn_groups < 1 || base_channels % gn_groups != 0)
      throw InvalidConfigError("aligner: gn_groups must divide base_channels");
    if (dropout < 0.0 || dropout >= 1.0)
      throw InvalidConfigError("aligner: dropout must be in [0, 1)");
    if (!(label_scale_um > 0.0))
      throw InvalidConfigError("aligner: label_scale_um must be positive");
  }
};

inline json to_json(const AlignerConfig& c) {
  return {{"in_channels", c.in_channels},
          {"base_channels", c.base_channels},
          {"feat_dim", c.feat_dim},
          {"head_hidden", c.head_hidden},
          {"gn_groups", c.gn_groups},
          {"dropout", c.dropout},
          {"label_scale_um", c.label_scale_um}};
}
inline AlignerConfig aligner_config_from_json(const json& j) {
  AlignerConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.feat_dim = j.at("feat_dim").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.gn_groups = j.at("gn_groups").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.label_scale_um = j.at("label_scale_um").get<double>();
  return c;
}

template <class S>
class AlignerModelT {
 public:
  AlignerModelT(const AlignerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(stable_seed(seed, 0xA1));
    const int c1 = cfg.base_channels;
    const int g = cfg.gn_groups;

    ext_.template append<nn::Conv2d<S>>(cfg.in_channels, c1, 3, 2, 1, rng);
    ext_.template append<nn::GroupNorm<S>>(g, c1);
    ext_.template append<nn::ReLU<S>>();
    ext_.template append<nn::ResidualBlock<S>>(c1, c1, 1, g, rng);
    ext_.template append<nn::ResidualBlock<S>>(c1, 2 * c1, 2, g, rng);
    ext_.template append<nn::ResidualBlock<S>>(2 * c1, 4 * c1, 2, g, rng);
    ext_.template append<nn::ResidualBlock<S>>(4 * c1, 8 * c1, 2, g, rng);
    ext_.template append<nn::GlobalAvgPool<S>>();
    ext_.template append<nn::Linear<S>>(8 * c1, cfg.feat_dim, rng);

    reg_.template append<nn::Linear<S>>(cfg.feat_dim, cfg.head_hidden, rng);
    reg_.template append<nn::ReLU<S>>();
    reg_.template append<nn::Dropout<S>>(cfg.dropout, stable_seed(seed, 0xD0));
    reg_.template append<nn::Linear<S>>(cfg.head_hidden, 2, rng);

    dom_.template append<nn::Linear<S>>(cfg.feat_dim, cfg.head_hidden, rng);
    dom_.template append<nn::ReLU<S>>();
    dom_.template append<nn::Dropout<S>>(cfg.dropout, stable_seed(seed, 0xD1));
    dom_.template append<nn::Linear<S>>(cfg.head_hidden, 1, rng);
  }

  nn::Tensor<S> forward_features(const nn::Tensor<S>& x, bool train) {
    return ext_.forward(x, train);
  }
  nn::Tensor<S> forward_regress(const nn::Tensor<S>& f, bool train) {
    return reg_.forward(f, train);
  }
  /// Raw domain logits; the losses apply the logistic map themselves.
  nn::Tensor<S> forward_domain(const nn::Tensor<S>& f, bool train) {
    return dom_.forward(f, train);
  }
  nn::Tensor<S> backward_features(const nn::Tensor<S>& df) {
    return ext_.backward(df);
  }
  nn::Tensor<S> backward_regress(const nn::Tensor<S>& dr) {
    return reg_.backward(dr);
  }
  nn::Tensor<S> backward_domain(const nn::Tensor<S>& dp) {
    return dom_.backward(dp);
  }

  /// Extractor plus regression head: the parameters the task loss trains.
  std::vector<nn::Param<S>*> params_task() {
    std::vector<nn::Param<S>*> out;
    ext_.collect_params(out);
    reg_.collect_params(out);
    return out;
  }
  std::vector<nn::Param<S>*> params_domain() {
    std::vector<nn::Param<S>*> out;
    dom_.collect_params(out);
    return out;
  }

  std::vector<nn::NamedTensor<S>> named_state() {
    std::vector<nn::NamedTensor<S>> out;
    ext_.named_state("ext.", out);
    reg_.named_state("reg.", out);
    dom_.named_state("dom.", out);
    return out;
  }

  const AlignerConfig& config() const { return cfg_; }

 private:
  AlignerConfig cfg_;
  nn::Sequential<S> ext_;
  nn::Sequential<S> reg_;
  nn::Sequential<S> dom_;
};

using AlignerModel = AlignerModelT<float>;

// ---------------------------------------------------------------------------
// Sample <-> tensor bridge: the five field images of one capture form the
// five input channels, fixed field order.

template <class S = float>
nn::Tensor<S> samples_to_tensor(const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw InvalidInputError("samples_to_tensor: empty batch");
  const int side = batch[0]->images.fovs.at(0).side;
  const int n_fov = static_cast<int>(batch[0]->images.fovs.size());
  nn::Tensor<S> t(static_cast<int>(batch.size()), n_fov, side, side);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& fovs = batch[b]->images.fovs;
    if (static_cast<int>(fovs.size()) != n_fov || fovs[0].side != side)
      throw InvalidInputError("samples_to_tensor: inconsistent captures");
    for (int f = 0; f < n_fov; ++f) {
      S* dst = t.v.data() + b * t.sample_stride() +
               static_cast<std::size_t>(f) * t.plane();
      for (std::size_t i = 0; i < fovs[f].px.size(); ++i)
        dst[i] = static_cast<S>(fovs[f].px[i]);
    }
  }
  return t;
}

/// Labels as an [N, 2, 1, 1] tensor divided by scale_um (normalized units).
template <class S = float>
nn::Tensor<S> labels_to_tensor(const std::vector<const Sample*>& batch,
                               double scale_um) {
  if (!(scale_um > 0.0))
    throw InvalidInputError("labels_to_tensor: scale must be positive");
  nn::Tensor<S> t(static_cast<int>(batch.size()), 2, 1, 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!batch[b]->label)
      throw InvalidInputError("labels_to_tensor: sample lacks a label");
    t.v[2 * b] = static_cast<S>(batch[b]->label->dx_um / scale_um);
    t.v[2 * b + 1] = static_cast<S>(batch[b]->label->dy_um / scale_um);
  }
  return t;
}

inline std::vector<const Sample*> flatten_samples(const Dataset& ds) {
  std::vector<const Sample*> out;
  for (const auto& lr : ds.lenses)
    for (const auto& s : lr.samples) out.push_back(&s);
  return out;
}

/// Feature embedding of one capture, eval mode.
template <class S>
std::vector<double> extract_features(AlignerModelT<S>& model,
                                     const FovImageSet& capture) {
  if (static_cast<int>(capture.fovs.size()) != model.config().in_channels)
    throw InvalidInputError("extract_features: wrong field-image count");
  Sample s;
  s.images = capture;
  const auto f = model.forward_features(samples_to_tensor<S>({&s}), false);
  return std::vector<double>(f.v.begin(), f.v.end());
}

/// Regression readout of one feature vector, denormalized to micrometers.
template <class S>
MisalignmentOffset predict_from_features(AlignerModelT<S>& model,
                                         const std::vector<double>& feat) {
  if (static_cast<int>(feat.size()) != model.config().feat_dim)
    throw InvalidInputError("predict_from_features: wrong feature length");
  nn::Tensor<S> f(1, model.config().feat_dim, 1, 1);
  for (std::size_t i = 0; i < feat.size(); ++i)
    f.v[i] = static_cast<S>(feat[i]);
  const auto r = model.forward_regress(f, false);
  const double k = model.config().label_scale_um;
  return {double(r.v[0]) * k, double(r.v[1]) * k};
}

/// Full capture-to-micrometers prediction in eval mode: the composition of
/// extract_features and predict_from_features.
template <class S>
MisalignmentOffset predict_offset(AlignerModelT<S>& model,
                                  const FovImageSet& capture) {
  Sample s;
  s.images = capture;
  const auto x = samples_to_tensor<S>({&s});
  const auto r = model.forward_regress(model.forward_features(x, false), false);
  const double k = model.config().label_scale_um;
  return {double(r.v[0]) * k, double(r.v[1]) * k};
}

template <class S>
std::vector<MisalignmentOffset> predict_batch(
    AlignerModelT<S>& model, const std::vector<const Sample*>& samples,
    int batch_size = 16) {
  std::vector<MisalignmentOffset> out;
  out.reserve(samples.size());
  const double k = model.config().label_scale_um;
  for (std::size_t at = 0; at < samples.size();
       at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(samples.size(), at + static_cast<std::size_t>(batch_size));
    std::vector<const Sample*> chunk(samples.begin() + at,
                                     samples.begin() + end);
    const auto x = samples_to_tensor<S>(chunk);
    const auto r =
        model.forward_regress(model.forward_features(x, false), false);
    for (int b = 0; b < r.n; ++b)
      out.push_back({double(r.v[2 * b]) * k, double(r.v[2 * b + 1]) * k});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss pieces. All reductions are per-branch means; the branch terms add
// unweighted so values transfer across batch sizes.

/// Mean-reduced elementwise L1 distance between paired feature batches.
template <class S>
double pixel_consistency_value(const nn::Tensor<S>& f_src,
                               const nn::Tensor<S>& f_s2t) {
  return nn::mean_abs_error(f_src, f_s2t).value;
}

/// Domain-classifier objective on raw logits: source branch toward label 1,
/// translated branch toward label 0.
template <class S>
double domain_disc_loss_value(const nn::Tensor<S>& logits_src,
                              const nn::Tensor<S>& logits_s2t) {
  return nn::bce_with_logits(logits_src, 1.0).value +
         nn::bce_with_logits(logits_s2t, 0.0).value;
}

/// Extractor confusion objective on raw logits; floor 2 log 2 when the
/// classifier sits at probability 1/2 on both branches.
template <class S>
double feature_adv_loss_value(const nn::Tensor<S>& logits_src,
                              const nn::Tensor<S>& logits_s2t) {
  return nn::confusion_with_logits(logits_src).value +
         nn::confusion_with_logits(logits_s2t).value;
}

/// Both-branch regression objective in normalized units: MSE(pred_src, label)
/// + MSE(pred_s2t, label), each term a mean over batch and coordinates.
template <class S>
double regression_loss_value(const nn::Tensor<S>& pred_src,
                             const nn::Tensor<S>& pred_s2t,
                             const nn::Tensor<S>& labels) {
  return nn::mean_squared_error(pred_src, labels).value +
         nn::mean_squared_error(pred_s2t, labels).value;
}

// ---------------------------------------------------------------------------
// Training.

struct AlignerTrainOptions {
  int iterations = 1200;
  int batch_size = 8;
  double lr = 1e-3;         // extractor + regression head
  double lr_domain = 1e-4;  // domain classifier head
  double lambda_pix = 0.05;
  double lambda_adv = 1.0;
  DegradationSpec degradation;
  bool shared_augment_params = false;  // pair shares one (type, strength) draw
  int lr_decay_every_epochs = 20;     // epoch = one pass over the source set
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 1;
  int log_every = 50;

  void validate() const {
    if (iterations < 0 || batch_size < 1)
      throw InvalidConfigError("aligner training: bad iteration/batch");
    if (!(lr > 0.0) || !(lr_domain > 0.0))
      throw InvalidConfigError("aligner training: bad learning rates");
    if (lambda_pix < 0.0 || lambda_adv < 0.0)
      throw InvalidConfigError("aligner training: bad loss weights");
    if (log_every < 1)
      throw InvalidConfigError("aligner training: log_every must be >= 1");
    if (lr_decay_every_epochs < 1)
      throw InvalidConfigError("aligner training: bad decay cadence");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
      throw InvalidConfigError("aligner training: bad decay factor");
    degradation.validate();
  }

  /// Iterations between learning-rate drops for a given source-set size.
  int decay_stride(std::size_t n_source_samples) const {
    const auto per_epoch =
        (n_source_samples + static_cast<std::size_t>(batch_size) - 1) /
        static_cast<std::size_t>(batch_size);
    return static_cast<int>(
        std::max<std::size_t>(1, per_epoch) *
        static_cast<std::size_t>(lr_decay_every_epochs));
  }
};

struct AlignerCurvePoint {
  int iteration = 0;
  double l_reg = 0.0;
  double l_pix = 0.0;
  double l_adv_e = 0.0;  // extractor confusion term, floor 2 log 2
  double l_adv_d = 0.0;  // domain classifier cross entropy
  double lr = 0.0;
};

struct AlignerTrainResult {
  std::vector<AlignerCurvePoint> curve;
};

/// Plain supervised regression on one labeled dataset: the single-domain
/// reference recipe every baseline pipeline shares. Labels are normalized by
/// the model's label scale.
template <class S>
AlignerTrainResult train_supervised(AlignerModelT<S>& model,
                                    const Dataset& train_ds,
                                    const AlignerTrainOptions& opt) {
  opt.validate();
  if (!train_ds.labeled())
    throw InvalidInputError("supervised training needs a labeled dataset");
  const auto pool = flatten_samples(train_ds);
  if (pool.empty()) throw InvalidInputError("supervised training: no samples");

  nn::Adam<S> optim(model.params_task(), opt.lr);
  Rng rng(stable_seed(opt.seed, 0x5A));
  AlignerTrainResult res;
  const int stride = opt.decay_stride(pool.size());
  const double scale = model.config().label_scale_um;

  for (int it = 0; it < opt.iterations; ++it) {
    if (it > 0 && it % stride == 0)
      optim.set_lr(optim.lr() * opt.lr_decay_factor);
    std::vector<const Sample*> batch;
    batch.reserve(static_cast<std::size_t>(opt.batch_size));
    for (int b = 0; b < opt.batch_size; ++b)
      batch.push_back(pool[static_cast<std::size_t>(rng.below(pool.size()))]);

    const auto x = samples_to_tensor<S>(batch);
    const auto labels = labels_to_tensor<S>(batch, scale);
    optim.zero_grad();
    const auto f = model.forward_features(x, true);
    const auto r = model.forward_regress(f, true);
    auto lg = nn::mean_squared_error(r, labels);
    model.backward_features(model.backward_regress(lg.grad));
    optim.step();

    if (!std::isfinite(lg.value))
      throw Error("supervised training diverged at iteration " +
                  std::to_string(it));
    if (it % opt.log_every == 0 || it == opt.iterations - 1)
      res.curve.push_back({it, lg.value, 0.0, 0.0, 0.0, optim.lr()});
  }
  return res;
}

/// Loss pieces of one full task pass (regression + feature consistency +
/// confusion against the current domain head).
struct DaTaskLosses {
  double l_reg = 0.0;
  double l_pix = 0.0;
  double l_adv_e = 0.0;
  double total = 0.0;
};

/// Head-side forward and backward of the complete task objective given the
/// extractor output f = [source; translated] whose activations are still
/// live. Gradients accumulate into extractor and regression-head parameters;
/// the domain head also picks up stray gradients that the caller must clear
/// before stepping it.
template <class S>
DaTaskLosses da3_task_from_features(AlignerModelT<S>& model,
                                    const nn::Tensor<S>& f,
                                    const nn::Tensor<S>& labels_norm,
                                    double lambda_pix, double lambda_adv,
                                    bool train) {
  if (f.n % 2 != 0)
    throw InvalidInputError("da3 task pass: expected a paired batch");
  const int B = f.n / 2;
  if (labels_norm.n != B)
    throw InvalidInputError("da3 task pass: label batch mismatch");

  // Confusion pressure against the (frozen-by-convention) domain head.
  const auto logits = model.forward_domain(f, train);
  auto conf_src = nn::confusion_with_logits(nn::slice_n(logits, 0, B));
  auto conf_s2t = nn::confusion_with_logits(nn::slice_n(logits, B, 2 * B));
  nn::Tensor<S> dlog(logits.n, logits.c, logits.h, logits.w);
  for (std::size_t i = 0; i < conf_src.grad.v.size(); ++i) {
    dlog.v[i] = static_cast<S>(lambda_adv) * conf_src.grad.v[i];
    dlog.v[conf_src.grad.v.size() + i] =
        static_cast<S>(lambda_adv) * conf_s2t.grad.v[i];
  }
  nn::Tensor<S> df = model.backward_domain(dlog);

  // Both-branch regression.
  const auto r = model.forward_regress(f, train);
  auto mse_src = nn::mean_squared_error(nn::slice_n(r, 0, B), labels_norm);
  auto mse_s2t = nn::mean_squared_error(nn::slice_n(r, B, 2 * B), labels_norm);
  nn::Tensor<S> dr(r.n, r.c, r.h, r.w);
  for (std::size_t i = 0; i < mse_src.grad.v.size(); ++i) {
    dr.v[i] = mse_src.grad.v[i];
    dr.v[mse_src.grad.v.size() + i] = mse_s2t.grad.v[i];
  }
  const nn::Tensor<S> df_reg = model.backward_regress(dr);

  // Feature consistency between the paired halves.
  auto pix =
      nn::mean_abs_error(nn::slice_n(f, 0, B), nn::slice_n(f, B, 2 * B));

  const std::size_t fstride = f.sample_stride();
  for (std::size_t i = 0; i < df.v.size(); ++i) df.v[i] += df_reg.v[i];
  for (std::size_t i = 0; i < pix.grad.v.size(); ++i) {
    const S g = static_cast<S>(lambda_pix) * pix.grad.v[i];
    df.v[i] += g;
    df.v[static_cast<std::size_t>(B) * fstride + i] -= g;
  }
  model.backward_features(df);

  DaTaskLosses out;
  out.l_reg = mse_src.value + mse_s2t.value;
  out.l_pix = pix.value;
  out.l_adv_e = conf_src.value + conf_s2t.value;
  out.total = out.l_reg + lambda_pix * out.l_pix + lambda_adv * out.l_adv_e;
  return out;
}

/// Complete task objective from the raw paired input batch: one extractor
/// pass plus da3_task_from_features. The entry point for gradient
/// verification against finite differences of .total.
template <class S>
DaTaskLosses da3_task_pass(AlignerModelT<S>& model, const nn::Tensor<S>& x,
                           const nn::Tensor<S>& labels_norm, double lambda_pix,
                           double lambda_adv, bool train) {
  const auto f = model.forward_features(x, train);
  return da3_task_from_features(model, f, labels_norm, lambda_pix, lambda_adv,
                                train);
}

namespace detail {
/// Pairs of corresponding samples; both datasets must share the lens/sample
/// structure, sample ids and labels.
inline std::vector<std::pair<const Sample*, const Sample*>> paired_samples(
    const Dataset& source, const Dataset& s2t) {
  if (source.lenses.size() != s2t.lenses.size())
    throw InvalidInputError("paired datasets: lens count mismatch");
  std::vector<std::pair<const Sample*, const Sample*>> out;
  for (std::size_t l = 0; l < source.lenses.size(); ++l) {
    const auto& a = source.lenses[l].samples;
    const auto& b = s2t.lenses[l].samples;
    if (a.size() != b.size())
      throw InvalidInputError("paired datasets: sample count mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].sample_id != b[i].sample_id)
        throw InvalidInputError("paired datasets: sample id mismatch");
      if (!a[i].label || !b[i].label ||
          a[i].label->dx_um != b[i].label->dx_um ||
          a[i].label->dy_um != b[i].label->dy_um)
        throw InvalidInputError("paired datasets: label mismatch");
      out.emplace_back(&a[i], &b[i]);
    }
  }
  if (out.empty()) throw InvalidInputError("paired datasets: empty");
  return out;
}
}  // namespace detail

/// Domain-adaptive training on a paired source / translated-source corpus.
/// Each iteration: augment every image of the drawn pairs independently
/// (optionally with shared parameters per pair), run the extractor once over
/// [source; translated]; step 1 updates the domain head on its cross-entropy
/// with features detached; step 2 updates extractor and regression head on
/// regression + feature-consistency + confusion with the domain head frozen.
template <class S>
AlignerTrainResult train_da3(AlignerModelT<S>& model, const Dataset& source,
                             const Dataset& s2t,
                             const AlignerTrainOptions& opt) {
  opt.validate();
  if (!source.labeled() || !s2t.labeled())
    throw InvalidInputError("adaptive training: labeled datasets required");
  const auto pairs = detail::paired_samples(source, s2t);

  nn::Adam<S> opt_task(model.params_task(), opt.lr);
  nn::Adam<S> opt_dom(model.params_domain(), opt.lr_domain);
  Rng rng(stable_seed(opt.seed, 0xDA));
  const std::uint64_t aug_root = stable_seed(opt.seed, 0xAE);
  std::uint64_t aug_counter = 0;
  AlignerTrainResult res;
  const int B = opt.batch_size;
  const int stride = opt.decay_stride(pairs.size());
  const double scale = model.config().label_scale_um;

  for (int it = 0; it < opt.iterations; ++it) {
    if (it > 0 && it % stride == 0) {
      opt_task.set_lr(opt_task.lr() * opt.lr_decay_factor);
      opt_dom.set_lr(opt_dom.lr() * opt.lr_decay_factor);
    }

    // Draw a paired batch and augment every image; each image gets its own
    // parameter stream unless the pair explicitly shares one.
    std::vector<Sample> src_aug(static_cast<std::size_t>(B));
    std::vector<Sample> s2t_aug(static_cast<std::size_t>(B));
    std::vector<const Sample*> src_batch, s2t_batch;
    for (int b = 0; b < B; ++b) {
      const auto& pr = pairs[static_cast<std::size_t>(rng.below(pairs.size()))];
      Sample& sa = src_aug[static_cast<std::size_t>(b)];
      Sample& ta = s2t_aug[static_cast<std::size_t>(b)];
      sa = *pr.first;
      ta = *pr.second;
      for (std::size_t fv = 0; fv < sa.images.fovs.size(); ++fv) {
        const std::uint64_t cs = aug_counter++;
        Rng r1(stable_seed(aug_root, cs));
        sa.images.fovs[fv] = augment_image(sa.images.fovs[fv], opt.degradation, r1);
        Rng r2(stable_seed(aug_root,
                           opt.shared_augment_params ? cs : aug_counter++));
        ta.images.fovs[fv] = augment_image(ta.images.fovs[fv], opt.degradation, r2);
      }
      src_batch.push_back(&sa);
      s2t_batch.push_back(&ta);
    }

    const auto x = nn::concat_n(samples_to_tensor<S>(src_batch),
                                samples_to_tensor<S>(s2t_batch));
    const auto labels = labels_to_tensor<S>(src_batch, scale);

    // One extractor pass; its activations back both steps below.
    const auto f = model.forward_features(x, true);

    // Step 1: domain head on detached features.
    opt_dom.zero_grad();
    double l_adv_d = 0.0;
    {
      const auto logits = model.forward_domain(f, true);
      auto bce_src = nn::bce_with_logits(nn::slice_n(logits, 0, B), 1.0);
      auto bce_s2t = nn::bce_with_logits(nn::slice_n(logits, B, 2 * B), 0.0);
      nn::Tensor<S> dlog(logits.n, logits.c, logits.h, logits.w);
      for (std::size_t i = 0; i < bce_src.grad.v.size(); ++i) {
        dlog.v[i] = bce_src.grad.v[i];
        dlog.v[bce_src.grad.v.size() + i] = bce_s2t.grad.v[i];
      }
      model.backward_domain(dlog);  // feature gradient discarded: detached
      opt_dom.step();
      l_adv_d = bce_src.value + bce_s2t.value;
    }

    // Step 2: extractor and regression head against the refreshed domain
    // head. The domain head collects stray gradients here; the next
    // iteration's zero_grad clears them before its step.
    opt_task.zero_grad();
    const DaTaskLosses tl = da3_task_from_features(
        model, f, labels, opt.lambda_pix, opt.lambda_adv, true);
    opt_task.step();

    if (!std::isfinite(tl.total) || !std::isfinite(l_adv_d))
      throw Error("adaptive training diverged at iteration " +
                  std::to_string(it));
    if (it % opt.log_every == 0 || it == opt.iterations - 1)
      res.curve.push_back(
          {it, tl.l_reg, tl.l_pix, tl.l_adv_e, l_adv_d, opt_task.lr()});
  }
  return res;
}

}  // namespace lensalign
