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

#include <set>
#include <vector>

#include "lensalign/nn/layers.hpp"

namespace lensalign::nn {

/// Vector quantization bottleneck. Each spatial code vector snaps to its
/// nearest codebook entry; the backward pass is straight-through for the
/// encoder plus the commitment pull toward the chosen code. The codebook
/// itself learns through the quantization loss term.
///
/// After forward(): codebook_loss() = mean((sg[z] - e)^2) drives the codes,
/// commitment_loss() = the same value weighted by beta on the encoder side.
template <class S>
class VectorQuantizer : public Layer<S> {
 public:
  VectorQuantizer(int codebook_size, int code_dim, Rng& rng,
                  double commitment_beta = 0.25)
      : k_(codebook_size), d_(code_dim),
        beta_(static_cast<S>(commitment_beta)) {
    if (codebook_size < 2 || code_dim < 1)
      throw InvalidConfigError("vq: need at least 2 codes and 1 dimension");
    codebook_.init({k_, d_});
    for (S& v : codebook_.w) v = static_cast<S>(rng.normal() * 0.5);
  }

  Tensor<S> forward(const Tensor<S>& x, bool) override {
    if (x.c != d_) throw InvalidInputError("vq: channel dim != code dim");
    x_ = x;
    const std::size_t plane = x.plane();
    assign_.assign(static_cast<std::size_t>(x.n) * plane, 0);
    Tensor<S> y = x;
    double qloss = 0.0;
    for (int n = 0; n < x.n; ++n) {
      for (std::size_t p = 0; p < plane; ++p) {
        const S* xs = x.sample(n);
        double best = 1e300;
        int best_k = 0;
        for (int k = 0; k < k_; ++k) {
          const S* e = codebook_.w.data() + static_cast<std::size_t>(k) * d_;
          double dist = 0.0;
          for (int c = 0; c < d_; ++c) {
            const double diff = xs[static_cast<std::size_t>(c) * plane + p] - e[c];
            dist += diff * diff;
          }
          if (dist < best) {
            best = dist;
            best_k = k;
          }
        }
        assign_[static_cast<std::size_t>(n) * plane + p] = best_k;
        qloss += best;
        const S* e = codebook_.w.data() + static_cast<std::size_t>(best_k) * d_;
        S* ys = y.sample(n);
        for (int c = 0; c < d_; ++c)
          ys[static_cast<std::size_t>(c) * plane + p] = e[c];
      }
    }
    const double total = static_cast<double>(x.size());
    codebook_loss_ = static_cast<S>(qloss / total);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    const std::size_t plane = x_.plane();
    const S inv_total = static_cast<S>(1.0 / static_cast<double>(x_.size()));
    Tensor<S> dx = dy;  // straight-through estimator
    for (int n = 0; n < x_.n; ++n) {
      const S* xs = x_.sample(n);
      S* dxs = dx.sample(n);
      for (std::size_t p = 0; p < plane; ++p) {
        const int k = assign_[static_cast<std::size_t>(n) * plane + p];
        const S* e = codebook_.w.data() + static_cast<std::size_t>(k) * d_;
        S* de = codebook_.g.data() + static_cast<std::size_t>(k) * d_;
        for (int c = 0; c < d_; ++c) {
          const std::size_t idx = static_cast<std::size_t>(c) * plane + p;
          const S diff = xs[idx] - e[c];
          dxs[idx] += beta_ * S(2) * diff * inv_total;  // commitment pull
          de[c] += S(-2) * diff * inv_total;            // codebook update
        }
      }
    }
    return dx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&codebook_);
  }
  void named_state(const std::string& p,
                   std::vector<NamedTensor<S>>& out) override {
    out.push_back({p + "codebook", &codebook_.w, codebook_.shape});
  }

  S codebook_loss() const { return codebook_loss_; }
  S commitment_loss() const { return beta_ * codebook_loss_; }

  int codes_in_use() const {
    std::set<int> s(assign_.begin(), assign_.end());
    return static_cast<int>(s.size());
  }

 private:
  int k_, d_;
  S beta_;
  Param<S> codebook_;
  Tensor<S> x_;
  std::vector<int> assign_;
  S codebook_loss_ = S(0);
};

}  // namespace lensalign::nn
