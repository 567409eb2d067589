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

#include "lensalign/common.hpp"
#include "lensalign/nn/tensor.hpp"

namespace lensalign::nn {

/// Scalar loss plus its gradient with respect to the first argument.
/// All reductions are means over every element; accumulation in double.
template <class S>
struct LossGrad {
  double value = 0.0;
  Tensor<S> grad;
};

template <class S>
LossGrad<S> mean_squared_error(const Tensor<S>& pred, const Tensor<S>& target) {
  if (!pred.same_shape(target))
    throw InvalidInputError("mean_squared_error: shape mismatch");
  LossGrad<S> out;
  out.grad = Tensor<S>(pred.n, pred.c, pred.h, pred.w);
  const double inv_n = 1.0 / static_cast<double>(pred.v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const double d = double(pred.v[i]) - double(target.v[i]);
    acc += d * d;
    out.grad.v[i] = static_cast<S>(2.0 * d * inv_n);
  }
  out.value = acc * inv_n;
  return out;
}

template <class S>
LossGrad<S> mean_abs_error(const Tensor<S>& pred, const Tensor<S>& target) {
  if (!pred.same_shape(target))
    throw InvalidInputError("mean_abs_error: shape mismatch");
  LossGrad<S> out;
  out.grad = Tensor<S>(pred.n, pred.c, pred.h, pred.w);
  const double inv_n = 1.0 / static_cast<double>(pred.v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const double d = double(pred.v[i]) - double(target.v[i]);
    acc += std::abs(d);
    out.grad.v[i] = static_cast<S>((d > 0.0 ? 1.0 : d < 0.0 ? -1.0 : 0.0) * inv_n);
  }
  out.value = acc * inv_n;
  return out;
}

/// Least-squares target used by the style critic: mean (s - c)^2.
template <class S>
LossGrad<S> mse_to_const(const Tensor<S>& scores, double c) {
  LossGrad<S> out;
  out.grad = Tensor<S>(scores.n, scores.c, scores.h, scores.w);
  const double inv_n = 1.0 / static_cast<double>(scores.v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.v.size(); ++i) {
    const double d = double(scores.v[i]) - c;
    acc += d * d;
    out.grad.v[i] = static_cast<S>(2.0 * d * inv_n);
  }
  out.value = acc * inv_n;
  return out;
}

namespace detail {
constexpr double kProbEps = 1e-7;
inline double clamp_prob(double p) {
  return p < kProbEps ? kProbEps : (p > 1.0 - kProbEps ? 1.0 - kProbEps : p);
}
inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
}  // namespace detail

/// Binary cross-entropy of logits against a constant class label
/// (1 = first domain, 0 = second): -mean[y log p + (1-y) log(1-p)] with
/// p = logistic(z) clamped away from {0,1}. Gradient w.r.t. the logit is the
/// saturation-free (p - y)/N.
template <class S>
LossGrad<S> bce_with_logits(const Tensor<S>& logits, double y) {
  if (y != 0.0 && y != 1.0)
    throw InvalidInputError("bce_with_logits: label must be 0 or 1");
  LossGrad<S> out;
  out.grad = Tensor<S>(logits.n, logits.c, logits.h, logits.w);
  const double inv_n = 1.0 / static_cast<double>(logits.v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.v.size(); ++i) {
    const double p = detail::logistic(double(logits.v[i]));
    const double pc = detail::clamp_prob(p);
    acc += -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    out.grad.v[i] = static_cast<S>((p - y) * inv_n);
  }
  out.value = acc * inv_n;
  return out;
}

/// Symmetric confusion objective for the feature extractor against a domain
/// classifier: -1/2 mean[log(p (1-p))], p = logistic(z) clamped away from
/// {0,1}. Minimized at p = 1/2 (zero logit) where the per-element value is
/// log 2; summing the source and translated terms gives the 2 log 2 floor of
/// a fully confused classifier. Gradient w.r.t. the logit is (p - 1/2)/N.
template <class S>
LossGrad<S> confusion_with_logits(const Tensor<S>& logits) {
  LossGrad<S> out;
  out.grad = Tensor<S>(logits.n, logits.c, logits.h, logits.w);
  const double inv_n = 1.0 / static_cast<double>(logits.v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.v.size(); ++i) {
    const double p = detail::logistic(double(logits.v[i]));
    const double pc = detail::clamp_prob(p);
    acc += -0.5 * std::log(pc * (1.0 - pc));
    out.grad.v[i] = static_cast<S>((p - 0.5) * inv_n);
  }
  out.value = acc * inv_n;
  return out;
}

}  // namespace lensalign::nn
