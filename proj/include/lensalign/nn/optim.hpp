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
#include <vector>

#include "lensalign/nn/tensor.hpp"

namespace lensalign::nn {

/// Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
/// Moment buffers live inside the Params so several optimizers never share
/// state by accident.
template <class S>
class Adam {
 public:
  explicit Adam(std::vector<Param<S>*> params, double lr)
      : params_(std::move(params)), lr_(lr) {
    for (Param<S>* p : params_) {
      if (p->m.size() != p->w.size()) {
        p->m.assign(p->w.size(), S(0));
        p->v.assign(p->w.size(), S(0));
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void zero_grad() {
    for (Param<S>* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (Param<S>* p : params_) {
      for (std::size_t i = 0; i < p->w.size(); ++i) {
        const double g = static_cast<double>(p->g[i]);
        const double m = beta1_ * static_cast<double>(p->m[i]) + (1.0 - beta1_) * g;
        const double v = beta2_ * static_cast<double>(p->v[i]) + (1.0 - beta2_) * g * g;
        p->m[i] = static_cast<S>(m);
        p->v[i] = static_cast<S>(v);
        const double update = lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
        p->w[i] = static_cast<S>(static_cast<double>(p->w[i]) - update);
      }
    }
  }

  long long steps_taken() const { return t_; }

 private:
  std::vector<Param<S>*> params_;
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long long t_ = 0;
};

}  // namespace lensalign::nn
