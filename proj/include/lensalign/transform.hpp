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
#include "lensalign/image.hpp"
#include "lensalign/nn/nn.hpp"

namespace lensalign {

// ---------------------------------------------------------------------------
// Image <-> tensor bridge. One grayscale image per (sample, channel) plane.

inline nn::Tensor<float> images_to_tensor(
    const std::vector<const Image*>& imgs) {
  if (imgs.empty()) throw InvalidInputError("images_to_tensor: empty batch");
  const int side = imgs[0]->side;
  nn::Tensor<float> t(static_cast<int>(imgs.size()), 1, side, side);
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i]->side != side)
      throw InvalidInputError("images_to_tensor: mixed image sides");
    std::copy(imgs[i]->px.begin(), imgs[i]->px.end(),
              t.v.begin() + i * t.sample_stride());
  }
  return t;
}

/// Channel plane (n, c) of a tensor as an image, clamped to [0, 1].
inline Image tensor_to_image(const nn::Tensor<float>& t, int n, int c = 0) {
  if (t.h != t.w) throw InvalidInputError("tensor_to_image: non-square plane");
  Image im(t.h);
  const float* src = t.sample(n) + static_cast<std::size_t>(c) * t.plane();
  for (std::size_t i = 0; i < im.px.size(); ++i)
    im.px[i] = std::clamp(src[i], 0.0f, 1.0f);
  return im;
}

/// Flat view over every field image in a dataset, traversal order.
inline std::vector<const Image*> flatten_fov_refs(const Dataset& ds) {
  std::vector<const Image*> out;
  for (const auto& lr : ds.lenses)
    for (const auto& s : lr.samples)
      for (const auto& im : s.images.fovs) out.push_back(&im);
  return out;
}

// ---------------------------------------------------------------------------
// Style translation generator: a quantized-bottleneck autoencoder. The
// encoder halves resolution twice into a code map, each code vector snaps to
// its nearest codebook entry, and the decoder mirrors the encoder back to a
// sigmoid image. The discrete bottleneck limits style capacity, which keeps
// the content (crosshair geometry) pinned while the style shifts.

struct GeneratorConfig {
  int base_channels = 12;
  int code_dim = 64;
  int codebook_size = 256;
  int gn_groups = 4;
  double commitment_beta = 0.25;

  void validate() const {
    if (base_channels < 1 || code_dim < 1 || codebook_size < 2)
      throw InvalidConfigError("generator: bad channel/codebook sizes");
    if (gn_groups < 1 || base_channels % gn_groups != 0)
      throw InvalidConfigError(
          "generator: gn_groups must divide base_channels");
  }
};

inline json to_json(const GeneratorConfig& c) {
  return {{"base_channels", c.base_channels},
          {"code_dim", c.code_dim},
          {"codebook_size", c.codebook_size},
          {"gn_groups", c.gn_groups},
          {"commitment_beta", c.commitment_beta}};
}
inline GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  c.code_dim = j.at("code_dim").get<int>();
  c.codebook_size = j.at("codebook_size").get<int>();
  c.gn_groups = j.at("gn_groups").get<int>();
  c.commitment_beta = j.at("commitment_beta").get<double>();
  return c;
}

class GeneratorModel {
 public:
  GeneratorModel(const GeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(stable_seed(seed, 0x6E));
    const int c1 = cfg.base_channels;
    const int c2 = 2 * cfg.base_channels;
    const int c4 = 4 * cfg.base_channels;
    const int g = cfg.gn_groups;

    net_.append<nn::Conv2d<float>>(1, c1, 3, 1, 1, rng);
    net_.append<nn::GroupNorm<float>>(g, c1);
    net_.append<nn::ReLU<float>>();
    net_.append<nn::Conv2d<float>>(c1, c2, 4, 2, 1, rng);
    net_.append<nn::GroupNorm<float>>(g, c2);
    net_.append<nn::ReLU<float>>();
    net_.append<nn::Conv2d<float>>(c2, c4, 4, 2, 1, rng);
    net_.append<nn::GroupNorm<float>>(g, c4);
    net_.append<nn::ReLU<float>>();
    net_.append<nn::Conv2d<float>>(c4, cfg.code_dim, 3, 1, 1, rng);
    vq_ = &net_.append<nn::VectorQuantizer<float>>(
        cfg.codebook_size, cfg.code_dim, rng, cfg.commitment_beta);
    net_.append<nn::Conv2d<float>>(cfg.code_dim, c4, 3, 1, 1, rng);
    net_.append<nn::GroupNorm<float>>(g, c4);
    net_.append<nn::ReLU<float>>();
    net_.append<nn::Upsample2x<float>>();
    net_.append<nn::Conv2d<float>>(c4, c2, 3, 1, 1, rng);
    net_.append<nn::GroupNorm<float>>(g, c2);
    net_.append<nn::ReLU<float>>();
    net_.append<nn::Upsample2x<float>>();
    net_.append<nn::Conv2d<float>>(c2, c1, 3, 1, 1, rng);
    net_.append<nn::GroupNorm<float>>(g, c1);
    net_.append<nn::ReLU<float>>();
    net_.append<nn::Conv2d<float>>(c1, 1, 3, 1, 1, rng);
    net_.append<nn::Sigmoid<float>>();
  }

  /// Output matches the input size; inputs whose sides are not multiples of 4
  /// are zero-padded for the strided stages and cropped back.
  nn::Tensor<float> forward(const nn::Tensor<float>& x, bool train) {
    if (x.c != 1) throw InvalidInputError("generator: expects 1 channel");
    in_h_ = x.h;
    in_w_ = x.w;
    pad_h_ = (4 - x.h % 4) % 4;
    pad_w_ = (4 - x.w % 4) % 4;
    if (pad_h_ == 0 && pad_w_ == 0) return net_.forward(x, train);

    nn::Tensor<float> xp(x.n, 1, x.h + pad_h_, x.w + pad_w_);
    for (int n = 0; n < x.n; ++n)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
          xp.at(n, 0, y, xx) = x.at(n, 0, y, xx);
    nn::Tensor<float> yp = net_.forward(xp, train);
    nn::Tensor<float> y(x.n, 1, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx)
          y.at(n, 0, yy, xx) = yp.at(n, 0, yy, xx);
    return y;
  }

  nn::Tensor<float> backward(const nn::Tensor<float>& dy) {
    if (pad_h_ == 0 && pad_w_ == 0) return net_.backward(dy);
    nn::Tensor<float> dyp(dy.n, 1, in_h_ + pad_h_, in_w_ + pad_w_);
    for (int n = 0; n < dy.n; ++n)
      for (int y = 0; y < in_h_; ++y)
        for (int x = 0; x < in_w_; ++x)
          dyp.at(n, 0, y, x) = dy.at(n, 0, y, x);
    nn::Tensor<float> dxp = net_.backward(dyp);
    nn::Tensor<float> dx(dy.n, 1, in_h_, in_w_);
    for (int n = 0; n < dy.n; ++n)
      for (int y = 0; y < in_h_; ++y)
        for (int x = 0; x < in_w_; ++x)
          dx.at(n, 0, y, x) = dxp.at(n, 0, y, x);
    return dx;
  }

  std::vector<nn::Param<float>*> params() {
    std::vector<nn::Param<float>*> out;
    net_.collect_params(out);
    return out;
  }
  std::vector<nn::NamedTensor<float>> named_state(const std::string& prefix) {
    std::vector<nn::NamedTensor<float>> out;
    net_.named_state(prefix, out);
    return out;
  }

  double codebook_loss() const { return vq_->codebook_loss(); }
  double commitment_loss() const { return vq_->commitment_loss(); }
  int codes_in_use() const { return vq_->codes_in_use(); }
  const GeneratorConfig& config() const { return cfg_; }

 private:
  GeneratorConfig cfg_;
  nn::Sequential<float> net_;
  nn::VectorQuantizer<float>* vq_ = nullptr;
  int in_h_ = 0, in_w_ = 0, pad_h_ = 0, pad_w_ = 0;
};

// ---------------------------------------------------------------------------
// Patch-level style critic with spectrally normalized convolutions. Outputs a
// grid of raw least-squares scores; each patch judges one receptive field.

struct StyleDiscriminatorConfig {
  int base_channels = 12;
  void validate() const {
    if (base_channels < 1)
      throw InvalidConfigError("style critic: base_channels must be positive");
  }
};

class StyleDiscriminator {
 public:
  StyleDiscriminator(const StyleDiscriminatorConfig& cfg, std::uint64_t seed)
      : cfg_(cfg) {
    cfg.validate();
    Rng rng(stable_seed(seed, 0x6D));
    const int c1 = cfg.base_channels;
    const int c2 = 2 * cfg.base_channels;
    const int c4 = 4 * cfg.base_channels;
    net_.append<nn::Conv2d<float>>(1, c1, 4, 2, 1, rng, true, true);
    net_.append<nn::LeakyReLU<float>>(0.2);
    net_.append<nn::Conv2d<float>>(c1, c2, 4, 2, 1, rng, true, true);
    net_.append<nn::LeakyReLU<float>>(0.2);
    net_.append<nn::Conv2d<float>>(c2, c4, 4, 2, 1, rng, true, true);
    net_.append<nn::LeakyReLU<float>>(0.2);
    net_.append<nn::Conv2d<float>>(c4, 1, 3, 1, 1, rng, true, true);
  }

  nn::Tensor<float> forward(const nn::Tensor<float>& x, bool train) {
    return net_.forward(x, train);
  }
  nn::Tensor<float> backward(const nn::Tensor<float>& dy) {
    return net_.backward(dy);
  }
  std::vector<nn::Param<float>*> params() {
    std::vector<nn::Param<float>*> out;
    net_.collect_params(out);
    return out;
  }
  std::vector<nn::NamedTensor<float>> named_state(const std::string& prefix) {
    std::vector<nn::NamedTensor<float>> out;
    net_.named_state(prefix, out);
    return out;
  }
  const StyleDiscriminatorConfig& config() const { return cfg_; }

 private:
  StyleDiscriminatorConfig cfg_;
  nn::Sequential<float> net_;
};

// ---------------------------------------------------------------------------
// Patch-score pooling: the critic emits a grid of patch scores; the style
// losses act on one averaged scalar per image.

/// Mean patch score per image: [N, C, h, w] -> [N, 1, 1, 1].
inline nn::Tensor<float> mean_scores_per_image(const nn::Tensor<float>& s) {
  nn::Tensor<float> out(s.n, 1, 1, 1);
  const std::size_t plane = s.sample_stride();
  for (int n = 0; n < s.n; ++n) {
    const float* p = s.sample(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out.v[static_cast<std::size_t>(n)] =
        static_cast<float>(acc / static_cast<double>(plane));
  }
  return out;
}

/// Adjoint of mean_scores_per_image: distribute per-image scalar gradients
/// uniformly back over that image's patch grid.
inline nn::Tensor<float> spread_scores_per_image(const nn::Tensor<float>& g,
                                                 int c, int h, int w) {
  nn::Tensor<float> out(g.n, c, h, w);
  const std::size_t plane = out.sample_stride();
  const float inv = 1.0f / static_cast<float>(plane);
  for (int n = 0; n < g.n; ++n) {
    const float gv = g.v[static_cast<std::size_t>(n)] * inv;
    float* p = out.sample(n);
    for (std::size_t i = 0; i < plane; ++i) p[i] = gv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Objective pieces. The generator restyles both domains every step: source
// captures move toward the target style while target captures must survive a
// round trip, so the shared bottleneck cannot drift from the common content.
// All sums are plain (unweighted) term sums over per-image scores.

/// L1(G(src), src) + L1(G(trg), trg), each term mean-reduced.
inline double recon_pair_loss_value(const nn::Tensor<float>& g_src,
                                    const nn::Tensor<float>& d_src,
                                    const nn::Tensor<float>& g_trg,
                                    const nn::Tensor<float>& d_trg) {
  return nn::mean_abs_error(g_src, d_src).value +
         nn::mean_abs_error(g_trg, d_trg).value;
}

/// Generator pressure: E(s_gen_src - 1)^2 + E(s_gen_trg - 1)^2 over per-image
/// critic scores.
inline double gen_style_loss_value(const nn::Tensor<float>& s_gen_src,
                                   const nn::Tensor<float>& s_gen_trg) {
  return nn::mse_to_const(s_gen_src, 1.0).value +
         nn::mse_to_const(s_gen_trg, 1.0).value;
}

/// Critic objective: E(s_gen_src)^2 + E(s_gen_trg)^2 + E(s_real - 1)^2 over
/// per-image scores; both generated batches count as fake.
inline double disc_style_loss_value(const nn::Tensor<float>& s_gen_src,
                                    const nn::Tensor<float>& s_gen_trg,
                                    const nn::Tensor<float>& s_real) {
  return nn::mse_to_const(s_gen_src, 0.0).value +
         nn::mse_to_const(s_gen_trg, 0.0).value +
         nn::mse_to_const(s_real, 1.0).value;
}

/// Per-image style scores of a set of images under the critic, eval mode.
inline std::vector<double> style_scores(StyleDiscriminator& disc,
                                        const std::vector<const Image*>& imgs) {
  const nn::Tensor<float> s =
      mean_scores_per_image(disc.forward(images_to_tensor(imgs), false));
  return std::vector<double>(s.v.begin(), s.v.end());
}

// ---------------------------------------------------------------------------
// Stage-1 training: teach the generator to re-style source captures so the
// patch critic cannot tell them from real target captures, while L1
// reconstruction of both domains pins the underlying geometry to the input.

struct TransformTrainOptions {
  int iterations = 400;
  int batch_size = 8;
  double lr_g = 1e-3;
  double lr_d = 1e-3;
  double lambda_recon = 1.0;
  std::uint64_t seed = 1;
  int log_every = 25;

  void validate() const {
    if (iterations < 0 || batch_size < 1)
      throw InvalidConfigError("transform training: bad iteration/batch");
    if (!(lr_g > 0.0) || !(lr_d > 0.0) || !(lambda_recon >= 0.0))
      throw InvalidConfigError("transform training: bad rates");
    if (log_every < 1)
      throw InvalidConfigError("transform training: log_every must be >= 1");
  }
};

struct TransformCurvePoint {
  int iteration = 0;
  double l_recon = 0.0;
  double l_gen_style = 0.0;
  double l_disc = 0.0;
  double vq_codebook = 0.0;
  double vq_commit = 0.0;
  int codes_in_use = 0;
};

struct TransformTrainResult {
  std::vector<TransformCurvePoint> curve;
};

inline TransformTrainResult train_transform(GeneratorModel& gen,
                                            StyleDiscriminator& disc,
                                            const Dataset& source,
                                            const Dataset& target,
                                            const TransformTrainOptions& opt) {
  opt.validate();
  const auto src_pool = flatten_fov_refs(source);
  const auto tgt_pool = flatten_fov_refs(target);
  if (src_pool.empty() || tgt_pool.empty())
    throw InvalidInputError("transform training: empty image pool");
  if (src_pool[0]->side != tgt_pool[0]->side)
    throw InvalidInputError("transform training: domain image sides differ");

  nn::Adam<float> opt_g(gen.params(), opt.lr_g);
  nn::Adam<float> opt_d(disc.params(), opt.lr_d);
  Rng rng(stable_seed(opt.seed, 0x51));

  auto draw = [&rng](const std::vector<const Image*>& pool, int k) {
    std::vector<const Image*> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i)
      out.push_back(pool[static_cast<std::size_t>(rng.below(pool.size()))]);
    return out;
  };

  TransformTrainResult res;
  const int B = opt.batch_size;
  for (int it = 0; it < opt.iterations; ++it) {
    const nn::Tensor<float> src = images_to_tensor(draw(src_pool, B));
    const nn::Tensor<float> trg = images_to_tensor(draw(tgt_pool, B));

    // One generator pass restyles the source batch and round-trips the
    // target batch; its activations serve both critic passes below.
    nn::Tensor<float> gout = gen.forward(nn::concat_n(src, trg), true);
    auto g_src = nn::slice_n(gout, 0, B);
    auto g_trg = nn::slice_n(gout, B, 2 * B);

    // Critic step on [G(src); G(trg); real] in a single batch; both generated
    // halves count as fake. Patch scores pool to one scalar per image first.
    opt_d.zero_grad();
    nn::Tensor<float> patches = disc.forward(nn::concat_n(gout, trg), true);
    nn::Tensor<float> s = mean_scores_per_image(patches);
    auto ld_gsrc = nn::mse_to_const(nn::slice_n(s, 0, B), 0.0);
    auto ld_gtrg = nn::mse_to_const(nn::slice_n(s, B, 2 * B), 0.0);
    auto ld_real = nn::mse_to_const(nn::slice_n(s, 2 * B, 3 * B), 1.0);
    const double l_disc = ld_gsrc.value + ld_gtrg.value + ld_real.value;
    nn::Tensor<float> ds(s.n, 1, 1, 1);
    for (int i = 0; i < B; ++i) {
      ds.v[static_cast<std::size_t>(i)] = ld_gsrc.grad.v[i];
      ds.v[static_cast<std::size_t>(B + i)] = ld_gtrg.grad.v[i];
      ds.v[static_cast<std::size_t>(2 * B + i)] = ld_real.grad.v[i];
    }
    disc.backward(spread_scores_per_image(ds, patches.c, patches.h, patches.w));
    opt_d.step();

    // Generator step against the updated critic: push both generated halves
    // toward the real score, reconstruct both inputs. The critic accumulates
    // stray gradients here; they are cleared at the next zero_grad.
    opt_g.zero_grad();
    nn::Tensor<float> gpatch = disc.forward(gout, true);
    nn::Tensor<float> s2 = mean_scores_per_image(gpatch);
    auto lg_src = nn::mse_to_const(nn::slice_n(s2, 0, B), 1.0);
    auto lg_trg = nn::mse_to_const(nn::slice_n(s2, B, 2 * B), 1.0);
    const double l_gen_style = lg_src.value + lg_trg.value;
    nn::Tensor<float> ds2(s2.n, 1, 1, 1);
    for (int i = 0; i < B; ++i) {
      ds2.v[static_cast<std::size_t>(i)] = lg_src.grad.v[i];
      ds2.v[static_cast<std::size_t>(B + i)] = lg_trg.grad.v[i];
    }
    nn::Tensor<float> dfake = disc.backward(
        spread_scores_per_image(ds2, gpatch.c, gpatch.h, gpatch.w));
    auto lrec_src = nn::mean_abs_error(g_src, src);
    auto lrec_trg = nn::mean_abs_error(g_trg, trg);
    const double l_recon = lrec_src.value + lrec_trg.value;
    const std::size_t half = dfake.v.size() / 2;
    for (std::size_t i = 0; i < half; ++i) {
      dfake.v[i] += static_cast<float>(opt.lambda_recon) * lrec_src.grad.v[i];
      dfake.v[half + i] +=
          static_cast<float>(opt.lambda_recon) * lrec_trg.grad.v[i];
    }
    gen.backward(dfake);
    opt_g.step();

    if (!std::isfinite(l_recon) || !std::isfinite(l_gen_style) ||
        !std::isfinite(l_disc))
      throw Error("domain transform training diverged at iteration " +
                  std::to_string(it));

    if (it % opt.log_every == 0 || it == opt.iterations - 1) {
      res.curve.push_back({it, l_recon, l_gen_style, l_disc,
                           gen.codebook_loss(), gen.commitment_loss(),
                           gen.codes_in_use()});
    }
  }
  return res;
}

/// Re-style every field image of a labeled dataset through the trained
/// generator. Labels, lens records and seeds carry over untouched; the result
/// is the pseudo-target training set.
inline Dataset translate_dataset(GeneratorModel& gen, const Dataset& src) {
  if (!src.labeled())
    throw InvalidInputError("translate: expected a labeled source dataset");
  Dataset out = src;
  out.role = Role::pseudo_target;
  for (auto& lr : out.lenses) {
    for (auto& s : lr.samples) {
      std::vector<const Image*> refs;
      refs.reserve(s.images.fovs.size());
      for (const auto& im : s.images.fovs) refs.push_back(&im);
      const nn::Tensor<float> y = gen.forward(images_to_tensor(refs), false);
      for (std::size_t f = 0; f < s.images.fovs.size(); ++f)
        s.images.fovs[f] = tensor_to_image(y, static_cast<int>(f));
    }
  }
  return out;
}

}  // namespace lensalign
