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

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lensalign/nn/tensor.hpp"

namespace lensalign::nn {

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapM = Eigen::Map<MatRM<S>>;
template <class S>
using CMapM = Eigen::Map<const MatRM<S>>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <class S>
struct Layer {
  virtual ~Layer() = default;
  virtual Tensor<S> forward(const Tensor<S>& x, bool train) = 0;
  virtual Tensor<S> backward(const Tensor<S>& dy) = 0;
  virtual void collect_params(std::vector<Param<S>*>&) {}
  virtual void named_state(const std::string&, std::vector<NamedTensor<S>>&) {}
};

// ---------------------------------------------------------------------------
// Convolution via im2col + GEMM. Weight layout [out_c, in_c * k * k].
// With `spectral` set, the weight matrix is divided by its leading singular
// value, estimated by one persistent-vector power iteration per training
// step; the backward pass treats the estimate as a constant.

template <class S>
class Conv2d : public Layer<S> {
 public:
  Conv2d(int in_c, int out_c, int k, int stride, int pad, Rng& rng,
         bool bias = true, bool spectral = false)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad),
        has_bias_(bias), spectral_(spectral) {
    if (in_c <= 0 || out_c <= 0 || k <= 0 || stride <= 0 || pad < 0)
      throw InvalidConfigError("conv: bad geometry");
    weight_.init({out_c, in_c * k * k});
    he_normal_init(weight_.w, static_cast<std::size_t>(in_c) * k * k, rng);
    if (has_bias_) bias_.init({out_c});
    if (spectral_) {
      u_.assign(static_cast<std::size_t>(out_c), S(0));
      double nrm = 0.0;
      for (S& x : u_) {
        x = static_cast<S>(rng.normal());
        nrm += static_cast<double>(x) * static_cast<double>(x);
      }
      nrm = std::sqrt(std::max(nrm, 1e-30));
      for (S& x : u_) x = static_cast<S>(x / nrm);
    }
  }

  Tensor<S> forward(const Tensor<S>& x, bool train) override {
    if (x.c != in_c_) throw InvalidInputError("conv: channel mismatch");
    x_ = x;
    oh_ = (x.h + 2 * pad_ - k_) / stride_ + 1;
    ow_ = (x.w + 2 * pad_ - k_) / stride_ + 1;
    if (oh_ <= 0 || ow_ <= 0) throw InvalidInputError("conv: output collapses");
    prepare_effective_weight(train);

    const int ck2 = in_c_ * k_ * k_;
    const std::size_t ohow = static_cast<std::size_t>(oh_) * ow_;
    cols_.resize(static_cast<std::size_t>(ck2) * ohow);
    Tensor<S> y(x.n, out_c_, oh_, ow_);
    CMapM<S> W(eff_weight(), out_c_, ck2);
    for (int n = 0; n < x.n; ++n) {
      im2col(x, n);
      CMapM<S> C(cols_.data(), ck2, static_cast<Eigen::Index>(ohow));
      MapM<S> Y(y.sample(n), out_c_, static_cast<Eigen::Index>(ohow));
      Y.noalias() = W * C;
      if (has_bias_) {
        CMapM<S> B(bias_.w.data(), out_c_, 1);
        Y.colwise() += B.col(0);
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    const int ck2 = in_c_ * k_ * k_;
    const std::size_t ohow = static_cast<std::size_t>(oh_) * ow_;
    const S inv_sigma = spectral_ ? S(1) / sigma_ : S(1);
    Tensor<S> dx(x_.n, in_c_, x_.h, x_.w);
    CMapM<S> W(eff_weight(), out_c_, ck2);
    MapM<S> dW(weight_.g.data(), out_c_, ck2);
    dcols_.resize(static_cast<std::size_t>(ck2) * ohow);
    for (int n = 0; n < x_.n; ++n) {
      im2col(x_, n);
      CMapM<S> C(cols_.data(), ck2, static_cast<Eigen::Index>(ohow));
      CMapM<S> dY(dy.sample(n), out_c_, static_cast<Eigen::Index>(ohow));
      dW.noalias() += inv_sigma * (dY * C.transpose());
      if (has_bias_) {
        // Fixed-order accumulation: Eigen's vectorized reductions split at
        // the first aligned element, making results depend on the heap
        // address of dy and breaking bit-reproducibility.
        for (int oc = 0; oc < out_c_; ++oc) {
          const S* row = dy.sample(n) + static_cast<std::size_t>(oc) * ohow;
          double acc = 0.0;
          for (std::size_t i = 0; i < ohow; ++i) acc += row[i];
          bias_.g[static_cast<std::size_t>(oc)] += static_cast<S>(acc);
        }
      }
      MapM<S> dC(dcols_.data(), ck2, static_cast<Eigen::Index>(ohow));
      dC.noalias() = W.transpose() * dY;
      col2im_accumulate(dx, n);
    }
    return dx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  void named_state(const std::string& p,
                   std::vector<NamedTensor<S>>& out) override {
    out.push_back({p + "w", &weight_.w, weight_.shape});
    if (has_bias_) out.push_back({p + "b", &bias_.w, bias_.shape});
    if (spectral_) out.push_back({p + "u", &u_, {out_c_}});
  }

  int out_channels() const { return out_c_; }

 private:
  const S* eff_weight() const {
    return spectral_ ? scaled_.data() : weight_.w.data();
  }

  // One power-iteration refresh of the largest singular value. Matvecs and
  // norms are hand-rolled with fixed iteration order in double so the result
  // does not vary with buffer addresses (Eigen's vectorized kernels peel
  // loops at runtime-alignment boundaries).
  void prepare_effective_weight(bool train) {
    if (!spectral_) return;
    const int ck2 = in_c_ * k_ * k_;
    const S* W = weight_.w.data();

    v_scratch_.assign(static_cast<std::size_t>(ck2), 0.0);
    for (int oc = 0; oc < out_c_; ++oc) {
      const double uo = static_cast<double>(u_[static_cast<std::size_t>(oc)]);
      const S* row = W + static_cast<std::size_t>(oc) * ck2;
      for (int j = 0; j < ck2; ++j) v_scratch_[static_cast<std::size_t>(j)] += uo * row[j];
    }
    double vn = 0.0;
    for (double v : v_scratch_) vn += v * v;
    vn = std::max(std::sqrt(vn), 1e-20);

    u_scratch_.assign(static_cast<std::size_t>(out_c_), 0.0);
    double sn = 0.0;
    for (int oc = 0; oc < out_c_; ++oc) {
      const S* row = W + static_cast<std::size_t>(oc) * ck2;
      double acc = 0.0;
      for (int j = 0; j < ck2; ++j) acc += row[j] * v_scratch_[static_cast<std::size_t>(j)];
      acc /= vn;
      u_scratch_[static_cast<std::size_t>(oc)] = acc;
      sn += acc * acc;
    }
    sn = std::max(std::sqrt(sn), 1e-20);
    if (train) {
      for (int oc = 0; oc < out_c_; ++oc)
        u_[static_cast<std::size_t>(oc)] =
            static_cast<S>(u_scratch_[static_cast<std::size_t>(oc)] / sn);
    }
    sigma_ = static_cast<S>(sn);

    scaled_.resize(weight_.w.size());
    const S inv = S(1) / sigma_;
    for (std::size_t i = 0; i < scaled_.size(); ++i)
      scaled_[i] = weight_.w[i] * inv;
  }

  void im2col(const Tensor<S>& x, int n) {
    const int ck2 = in_c_ * k_ * k_;
    const std::size_t ohow = static_cast<std::size_t>(oh_) * ow_;
    const S* xs = x.sample(n);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    std::size_t row = 0;
    for (int ic = 0; ic < in_c_; ++ic) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx, ++row) {
          S* dst = cols_.data() + row * ohow;
          for (int oy = 0; oy < oh_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= x.h) {
              for (int ox = 0; ox < ow_; ++ox) dst[oy * ow_ + ox] = S(0);
              continue;
            }
            const S* src = xs + ic * plane + static_cast<std::size_t>(iy) * x.w;
            for (int ox = 0; ox < ow_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              dst[oy * ow_ + ox] =
                  (ix < 0 || ix >= x.w) ? S(0) : src[ix];
            }
          }
        }
      }
    }
    (void)ck2;
  }

  void col2im_accumulate(Tensor<S>& dx, int n) {
    const std::size_t ohow = static_cast<std::size_t>(oh_) * ow_;
    S* xs = dx.sample(n);
    const std::size_t plane = static_cast<std::size_t>(dx.h) * dx.w;
    std::size_t row = 0;
    for (int ic = 0; ic < in_c_; ++ic) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx, ++row) {
          const S* src = dcols_.data() + row * ohow;
          for (int oy = 0; oy < oh_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= dx.h) continue;
            S* dst = xs + ic * plane + static_cast<std::size_t>(iy) * dx.w;
            for (int ox = 0; ox < ow_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix >= 0 && ix < dx.w) dst[ix] += src[oy * ow_ + ox];
            }
          }
        }
      }
    }
  }

  int in_c_, out_c_, k_, stride_, pad_;
  bool has_bias_, spectral_;
  Param<S> weight_, bias_;
  std::vector<S> u_, scaled_;
  std::vector<double> v_scratch_, u_scratch_;
  S sigma_ = S(1);
  Tensor<S> x_;
  std::vector<S> cols_, dcols_;
  int oh_ = 0, ow_ = 0;
};

// ---------------------------------------------------------------------------

template <class S>
class Linear : public Layer<S> {
 public:
  Linear(int in_f, int out_f, Rng& rng) : in_f_(in_f), out_f_(out_f) {
    weight_.init({out_f, in_f});
    he_normal_init(weight_.w, static_cast<std::size_t>(in_f), rng);
    bias_.init({out_f});
  }

  Tensor<S> forward(const Tensor<S>& x, bool) override {
    const int flat = x.c * x.h * x.w;
    if (flat != in_f_) throw InvalidInputError("linear: feature size mismatch");
    x_ = x;
    Tensor<S> y = Tensor<S>::vec(x.n, out_f_);
    CMapM<S> X(x.v.data(), x.n, in_f_);
    CMapM<S> W(weight_.w.data(), out_f_, in_f_);
    MapM<S> Y(y.v.data(), x.n, out_f_);
    Y.noalias() = X * W.transpose();
    CMapM<S> B(bias_.w.data(), 1, out_f_);
    Y.rowwise() += B.row(0);
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    Tensor<S> dx(x_.n, x_.c, x_.h, x_.w);
    CMapM<S> dY(dy.v.data(), x_.n, out_f_);
    CMapM<S> X(x_.v.data(), x_.n, in_f_);
    CMapM<S> W(weight_.w.data(), out_f_, in_f_);
    MapM<S> dW(weight_.g.data(), out_f_, in_f_);
    MapM<S> dX(dx.v.data(), x_.n, in_f_);
    dW.noalias() += dY.transpose() * X;
    // Fixed-order reduction; see the matching note in Conv2d::backward.
    for (int o = 0; o < out_f_; ++o) {
      double acc = 0.0;
      for (int b = 0; b < x_.n; ++b)
        acc += dy.v[static_cast<std::size_t>(b) * out_f_ + o];
      bias_.g[static_cast<std::size_t>(o)] += static_cast<S>(acc);
    }
    dX.noalias() = dY * W;
    return dx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void named_state(const std::string& p,
                   std::vector<NamedTensor<S>>& out) override {
    out.push_back({p + "w", &weight_.w, weight_.shape});
    out.push_back({p + "b", &bias_.w, bias_.shape});
  }

 private:
  int in_f_, out_f_;
  Param<S> weight_, bias_;
  Tensor<S> x_;
};

// ---------------------------------------------------------------------------

template <class S>
class ReLU : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    y_ = x;
    for (S& v : y_.v) v = v > S(0) ? v : S(0);
    return y_;
  }
  Tensor<S> backward(const Tensor<S>& dy) override {
    Tensor<S> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i)
      if (y_.v[i] <= S(0)) dx.v[i] = S(0);
    return dx;
  }

 private:
  Tensor<S> y_;
};

template <class S>
class LeakyReLU : public Layer<S> {
 public:
  explicit LeakyReLU(double alpha = 0.2) : alpha_(static_cast<S>(alpha)) {}
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    pos_.assign(x.size(), 0);
    Tensor<S> y = x;
    for (std::size_t i = 0; i < y.v.size(); ++i) {
      if (x.v[i] > S(0)) pos_[i] = 1;
      else y.v[i] = x.v[i] * alpha_;
    }
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) override {
    Tensor<S> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i)
      if (!pos_[i]) dx.v[i] *= alpha_;
    return dx;
  }

 private:
  S alpha_;
  std::vector<unsigned char> pos_;
};

template <class S>
class Sigmoid : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    y_ = x;
    for (S& v : y_.v)
      v = static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    return y_;
  }
  Tensor<S> backward(const Tensor<S>& dy) override {
    Tensor<S> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i)
      dx.v[i] *= y_.v[i] * (S(1) - y_.v[i]);
    return dx;
  }

 private:
  Tensor<S> y_;
};

// ---------------------------------------------------------------------------
// Group normalization with learned per-channel scale and shift. Statistics
// are per (sample, group), so results never depend on batch composition.

template <class S>
class GroupNorm : public Layer<S> {
 public:
  GroupNorm(int groups, int channels, double eps = 1e-5)
      : groups_(groups), channels_(channels), eps_(static_cast<S>(eps)) {
    if (groups <= 0 || channels % groups != 0)
      throw InvalidConfigError("groupnorm: groups must divide channels");
    gamma_.init({channels}, S(1));
    beta_.init({channels});
  }

  Tensor<S> forward(const Tensor<S>& x, bool) override {
    xhat_ = x;
    inv_std_.assign(static_cast<std::size_t>(x.n) * groups_, S(0));
    const int cpg = channels_ / groups_;
    const std::size_t plane = x.plane();
    const std::size_t glen = static_cast<std::size_t>(cpg) * plane;
    Tensor<S> y = x;
    for (int n = 0; n < x.n; ++n) {
      for (int g = 0; g < groups_; ++g) {
        S* base = xhat_.sample(n) + static_cast<std::size_t>(g) * glen;
        double mean = 0.0;
        for (std::size_t i = 0; i < glen; ++i) mean += base[i];
        mean /= static_cast<double>(glen);
        double var = 0.0;
        for (std::size_t i = 0; i < glen; ++i) {
          const double d = base[i] - mean;
          var += d * d;
        }
        var /= static_cast<double>(glen);
        const S is = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
        inv_std_[static_cast<std::size_t>(n) * groups_ + g] = is;
        S* yb = y.sample(n) + static_cast<std::size_t>(g) * glen;
        for (int cc = 0; cc < cpg; ++cc) {
          const int ch = g * cpg + cc;
          const S ga = gamma_.w[static_cast<std::size_t>(ch)];
          const S be = beta_.w[static_cast<std::size_t>(ch)];
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = static_cast<std::size_t>(cc) * plane + i;
            const S xh = static_cast<S>((base[idx] - mean) * is);
            base[idx] = xh;  // xhat_ now stores normalized values
            yb[idx] = ga * xh + be;
          }
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    const int cpg = channels_ / groups_;
    const std::size_t plane = xhat_.plane();
    const std::size_t glen = static_cast<std::size_t>(cpg) * plane;
    Tensor<S> dx(xhat_.n, xhat_.c, xhat_.h, xhat_.w);
    for (int n = 0; n < xhat_.n; ++n) {
      for (int g = 0; g < groups_; ++g) {
        const S* xh = xhat_.sample(n) + static_cast<std::size_t>(g) * glen;
        const S* dyb = dy.sample(n) + static_cast<std::size_t>(g) * glen;
        S* dxb = dx.sample(n) + static_cast<std::size_t>(g) * glen;
        const S is = inv_std_[static_cast<std::size_t>(n) * groups_ + g];
        double sum_dxh = 0.0, sum_dxh_xh = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
          const int ch = g * cpg + cc;
          const S ga = gamma_.w[static_cast<std::size_t>(ch)];
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = static_cast<std::size_t>(cc) * plane + i;
            const double dxh = static_cast<double>(dyb[idx]) * ga;
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[idx];
            gamma_.g[static_cast<std::size_t>(ch)] +=
                dyb[idx] * xh[idx];
            beta_.g[static_cast<std::size_t>(ch)] += dyb[idx];
          }
        }
        const double inv_n = 1.0 / static_cast<double>(glen);
        for (int cc = 0; cc < cpg; ++cc) {
          const int ch = g * cpg + cc;
          const S ga = gamma_.w[static_cast<std::size_t>(ch)];
          for (std::size_t i = 0; i < plane; ++i) {
            const std::size_t idx = static_cast<std::size_t>(cc) * plane + i;
            const double dxh = static_cast<double>(dyb[idx]) * ga;
            dxb[idx] = static_cast<S>(
                is * (dxh - inv_n * sum_dxh - xh[idx] * inv_n * sum_dxh_xh));
          }
        }
      }
    }
    return dx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void named_state(const std::string& p,
                   std::vector<NamedTensor<S>>& out) override {
    out.push_back({p + "g", &gamma_.w, gamma_.shape});
    out.push_back({p + "s", &beta_.w, beta_.shape});
  }

 private:
  int groups_, channels_;
  S eps_;
  Param<S> gamma_, beta_;
  Tensor<S> xhat_;
  std::vector<S> inv_std_;
};

// ---------------------------------------------------------------------------

template <class S>
class Dropout : public Layer<S> {
 public:
  Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {
    if (p < 0.0 || p >= 1.0) throw InvalidConfigError("dropout: p in [0, 1)");
  }

  Tensor<S> forward(const Tensor<S>& x, bool train) override {
    if (!train || p_ == 0.0) {
      active_ = false;
      return x;
    }
    active_ = true;
    mask_.assign(x.size(), S(0));
    const S scale = static_cast<S>(1.0 / (1.0 - p_));
    Tensor<S> y = x;
    for (std::size_t i = 0; i < y.v.size(); ++i) {
      if (rng_.uniform() >= p_) {
        mask_[i] = scale;
        y.v[i] *= scale;
      } else {
        y.v[i] = S(0);
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    if (!active_) return dy;
    Tensor<S> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= mask_[i];
    return dx;
  }

 private:
  double p_;
  Rng rng_;
  bool active_ = false;
  std::vector<S> mask_;
};

// ---------------------------------------------------------------------------

template <class S>
class Upsample2x : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    in_h_ = x.h;
    in_w_ = x.w;
    in_n_ = x.n;
    in_c_ = x.c;
    Tensor<S> y(x.n, x.c, 2 * x.h, 2 * x.w);
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < y.h; ++yy)
          for (int xx = 0; xx < y.w; ++xx)
            y.at(n, c, yy, xx) = x.at(n, c, yy / 2, xx / 2);
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) override {
    Tensor<S> dx(in_n_, in_c_, in_h_, in_w_);
    for (int n = 0; n < in_n_; ++n)
      for (int c = 0; c < in_c_; ++c)
        for (int yy = 0; yy < dy.h; ++yy)
          for (int xx = 0; xx < dy.w; ++xx)
            dx.at(n, c, yy / 2, xx / 2) += dy.at(n, c, yy, xx);
    return dx;
  }

 private:
  int in_h_ = 0, in_w_ = 0, in_n_ = 0, in_c_ = 0;
};

template <class S>
class GlobalAvgPool : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x, bool) override {
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<S> y = Tensor<S>::vec(x.n, x.c);
    const S inv = static_cast<S>(1.0 / (static_cast<double>(x.h) * x.w));
    for (int n = 0; n < x.n; ++n)
      for (int c = 0; c < x.c; ++c) {
        double acc = 0.0;
        for (int yy = 0; yy < x.h; ++yy)
          for (int xx = 0; xx < x.w; ++xx) acc += x.at(n, c, yy, xx);
        y.at(n, c, 0, 0) = static_cast<S>(acc) * inv;
      }
    return y;
  }
  Tensor<S> backward(const Tensor<S>& dy) override {
    Tensor<S> dx(dy.n, dy.c, in_h_, in_w_);
    const S inv = static_cast<S>(1.0 / (static_cast<double>(in_h_) * in_w_));
    for (int n = 0; n < dy.n; ++n)
      for (int c = 0; c < dy.c; ++c) {
        const S g = dy.at(n, c, 0, 0) * inv;
        for (int yy = 0; yy < in_h_; ++yy)
          for (int xx = 0; xx < in_w_; ++xx) dx.at(n, c, yy, xx) = g;
      }
    return dx;
  }

 private:
  int in_h_ = 0, in_w_ = 0;
};

// ---------------------------------------------------------------------------

template <class S>
class Sequential : public Layer<S> {
 public:
  template <class L, class... Args>
  L& append(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<S> forward(const Tensor<S>& x, bool train) override {
    Tensor<S> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
  }
  Tensor<S> backward(const Tensor<S>& dy) override {
    Tensor<S> cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      cur = (*it)->backward(cur);
    return cur;
  }
  void collect_params(std::vector<Param<S>*>& out) override {
    for (auto& l : layers_) l->collect_params(out);
  }
  void named_state(const std::string& p,
                   std::vector<NamedTensor<S>>& out) override {
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->named_state(p + std::to_string(i) + ".", out);
  }

 private:
  std::vector<std::unique_ptr<Layer<S>>> layers_;
};

// ---------------------------------------------------------------------------
// Standard two-conv residual block; a strided variant projects the skip path
// with a 1x1 convolution.

template <class S>
class ResidualBlock : public Layer<S> {
 public:
  ResidualBlock(int in_c, int out_c, int stride, int gn_groups, Rng& rng)
      : conv1_(in_c, out_c, 3, stride, 1, rng),
        gn1_(gn_groups, out_c),
        conv2_(out_c, out_c, 3, 1, 1, rng),
        gn2_(gn_groups, out_c),
        project_(stride != 1 || in_c != out_c) {
    if (project_) {
      skip_conv_ = std::make_unique<Conv2d<S>>(in_c, out_c, 1, stride, 0, rng);
      skip_gn_ = std::make_unique<GroupNorm<S>>(gn_groups, out_c);
    }
  }

  Tensor<S> forward(const Tensor<S>& x, bool train) override {
    Tensor<S> a = relu1_.forward(gn1_.forward(conv1_.forward(x, train), train),
                                 train);
    Tensor<S> m = gn2_.forward(conv2_.forward(a, train), train);
    Tensor<S> s = project_
                      ? skip_gn_->forward(skip_conv_->forward(x, train), train)
                      : x;
    if (!m.same_shape(s))
      throw InvalidInputError("residual block: branch shapes differ");
    for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] += s.v[i];
    return relu2_.forward(m, train);
  }

  Tensor<S> backward(const Tensor<S>& dy) override {
    Tensor<S> dsum = relu2_.backward(dy);
    Tensor<S> dmain = conv1_.backward(
        gn1_.backward(relu1_.backward(conv2_.backward(gn2_.backward(dsum)))));
    Tensor<S> dskip =
        project_ ? skip_conv_->backward(skip_gn_->backward(dsum)) : dsum;
    for (std::size_t i = 0; i < dmain.v.size(); ++i) dmain.v[i] += dskip.v[i];
    return dmain;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    conv1_.collect_params(out);
    gn1_.collect_params(out);
    conv2_.collect_params(out);
    gn2_.collect_params(out);
    if (project_) {
      skip_conv_->collect_params(out);
      skip_gn_->collect_params(out);
    }
  }
  void named_state(const std::string& p,
                   std::vector<NamedTensor<S>>& out) override {
    conv1_.named_state(p + "c1.", out);
    gn1_.named_state(p + "n1.", out);
    conv2_.named_state(p + "c2.", out);
    gn2_.named_state(p + "n2.", out);
    if (project_) {
      skip_conv_->named_state(p + "cs.", out);
      skip_gn_->named_state(p + "ns.", out);
    }
  }

 private:
  Conv2d<S> conv1_;
  GroupNorm<S> gn1_;
  Conv2d<S> conv2_;
  GroupNorm<S> gn2_;
  ReLU<S> relu1_, relu2_;
  bool project_;
  std::unique_ptr<Conv2d<S>> skip_conv_;
  std::unique_ptr<GroupNorm<S>> skip_gn_;
};

}  // namespace lensalign::nn
