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

#include <cstdint>
#include <string>
#include <vector>

#include "lensalign/common.hpp"

namespace lensalign::nn {

/// Dense NCHW tensor. 2D data (features, logits) uses h = w = 1. The scalar
/// type is templated so the whole stack can run in double for numerical
/// verification and float in production.
template <class S>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<S> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, S(0)) {}

  static Tensor vec(int n_, int c_) { return Tensor(n_, c_, 1, 1); }

  std::size_t size() const { return v.size(); }
  std::size_t plane() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t sample_stride() const { return static_cast<std::size_t>(c) * plane(); }

  S& at(int in, int ic, int iy, int ix) {
    return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  S at(int in, int ic, int iy, int ix) const {
    return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  S* sample(int in) { return v.data() + static_cast<std::size_t>(in) * sample_stride(); }
  const S* sample(int in) const {
    return v.data() + static_cast<std::size_t>(in) * sample_stride();
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void fill(S x) { std::fill(v.begin(), v.end(), x); }

  bool all_finite() const {
    for (S x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

/// Learnable parameter with its gradient and Adam state. Layers own their
/// Params; the optimizer works on a flat list of pointers.
template <class S>
struct Param {
  std::vector<S> w;
  std::vector<S> g;
  std::vector<S> m;  // Adam first moment
  std::vector<S> v;  // Adam second moment
  std::vector<int> shape;

  void init(std::vector<int> shp, S val = S(0)) {
    shape = std::move(shp);
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    w.assign(n, val);
    g.assign(n, S(0));
  }
  std::size_t size() const { return w.size(); }
  void zero_grad() { std::fill(g.begin(), g.end(), S(0)); }
};

/// Named view of a persistent array (parameter or buffer) for serialization.
template <class S>
struct NamedTensor {
  std::string name;
  std::vector<S>* data = nullptr;
  std::vector<int> shape;
};

template <class S>
void he_normal_init(std::vector<S>& w, std::size_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (S& x : w) x = static_cast<S>(rng.normal() * std);
}

/// Stack two batches along N; per-sample shapes must agree.
template <class S>
Tensor<S> concat_n(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.c != b.c || a.h != b.h || a.w != b.w)
    throw InvalidInputError("concat_n: per-sample shapes differ");
  Tensor<S> out(a.n + b.n, a.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  return out;
}

/// Samples [n0, n1) of a batch as a new tensor.
template <class S>
Tensor<S> slice_n(const Tensor<S>& t, int n0, int n1) {
  if (n0 < 0 || n1 > t.n || n0 >= n1)
    throw InvalidInputError("slice_n: bad sample range");
  Tensor<S> out(n1 - n0, t.c, t.h, t.w);
  const std::size_t stride = t.sample_stride();
  std::copy(t.v.begin() + n0 * stride, t.v.begin() + n1 * stride,
            out.v.begin());
  return out;
}

}  // namespace lensalign::nn
