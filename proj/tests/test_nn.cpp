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
#include <fstream>

#include "lensalign/nn/nn.hpp"

using namespace lensalign;
using namespace lensalign::nn;

namespace {

using T = Tensor<double>;

double dot(const T& a, const T& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

T random_tensor(int n, int c, int h, int w, Rng& rng, double lo = -1.0,
                double hi = 1.0) {
  T t(n, c, h, w);
  for (double& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

/// Random tensor bounded away from zero so piecewise-linear activations are
/// differentiable at every probe point.
T random_tensor_offzero(int n, int c, int h, int w, Rng& rng) {
  T t(n, c, h, w);
  for (double& v : t.v) {
    const double m = rng.uniform(0.1, 1.0);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

/// Central-difference check of input and parameter gradients against one
/// analytic backward pass, using the scalar loss L = <proj, forward(x)>.
double fd_check(Layer<double>& layer, T x, bool train = false,
                double eps = 1e-5) {
  Rng prng(991);
  T y0 = layer.forward(x, train);
  T proj = random_tensor(y0.n, y0.c, y0.h, y0.w, prng);

  std::vector<Param<double>*> params;
  layer.collect_params(params);
  for (auto* p : params) p->zero_grad();
  layer.forward(x, train);
  T dx = layer.backward(proj);

  double worst = 0.0;
  auto probe = [&](double* slot, double analytic) {
    const double save = *slot;
    *slot = save + eps;
    const double lp = dot(layer.forward(x, train), proj);
    *slot = save - eps;
    const double lm = dot(layer.forward(x, train), proj);
    *slot = save;
    const double numeric = (lp - lm) / (2.0 * eps);
    if (std::abs(numeric) < 1e-10 && std::abs(analytic) < 1e-10) return;
    worst = std::max(worst, rel_err(analytic, numeric));
  };

  for (std::size_t i = 0; i < x.v.size(); ++i) probe(&x.v[i], dx.v[i]);
  for (auto* p : params)
    for (std::size_t i = 0; i < p->w.size(); ++i) probe(&p->w[i], p->g[i]);
  return worst;
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(1);
  Conv2d<double> conv(3, 4, 3, 1, 1, rng);
  Rng xr(2);
  REQUIRE(fd_check(conv, random_tensor(2, 3, 6, 7, xr)) < 1e-4);
}

TEST_CASE("strided padded conv2d gradients match finite differences") {
  Rng rng(3);
  Conv2d<double> conv(2, 5, 4, 2, 1, rng);
  Rng xr(4);
  REQUIRE(fd_check(conv, random_tensor(2, 2, 9, 8, xr)) < 1e-4);
}

TEST_CASE("1x1 conv gradients match finite differences") {
  Rng rng(5);
  Conv2d<double> conv(4, 3, 1, 1, 0, rng);
  Rng xr(6);
  REQUIRE(fd_check(conv, random_tensor(2, 4, 5, 5, xr)) < 1e-4);
}

TEST_CASE("linear gradients match finite differences") {
  Rng rng(7);
  Linear<double> lin(12, 5, rng);
  Rng xr(8);
  REQUIRE(fd_check(lin, random_tensor(3, 12, 1, 1, xr)) < 1e-4);
}

TEST_CASE("groupnorm gradients match finite differences") {
  Rng rng(9);
  GroupNorm<double> gn(3, 6);
  Rng xr(10);
  REQUIRE(fd_check(gn, random_tensor(2, 6, 3, 4, xr)) < 1e-4);
}

TEST_CASE("activation gradients match finite differences") {
  Rng xr(11);
  ReLU<double> relu;
  REQUIRE(fd_check(relu, random_tensor_offzero(2, 3, 4, 4, xr)) < 1e-4);
  LeakyReLU<double> lrelu(0.2);
  REQUIRE(fd_check(lrelu, random_tensor_offzero(2, 3, 4, 4, xr)) < 1e-4);
  Sigmoid<double> sig;
  REQUIRE(fd_check(sig, random_tensor(2, 3, 4, 4, xr)) < 1e-4);
}

TEST_CASE("pooling and upsampling gradients match finite differences") {
  Rng xr(12);
  GlobalAvgPool<double> gap;
  REQUIRE(fd_check(gap, random_tensor(2, 4, 5, 5, xr)) < 1e-4);
  Upsample2x<double> up;
  REQUIRE(fd_check(up, random_tensor(2, 3, 4, 4, xr)) < 1e-4);
}

TEST_CASE("residual block gradients match finite differences") {
  Rng rng(13);
  ResidualBlock<double> plain(4, 4, 1, 2, rng);
  Rng xr(14);
  REQUIRE(fd_check(plain, random_tensor(2, 4, 5, 5, xr)) < 1e-4);

  Rng rng2(15);
  ResidualBlock<double> proj(4, 8, 2, 2, rng2);
  Rng xr2(16);
  REQUIRE(fd_check(proj, random_tensor(2, 4, 6, 6, xr2)) < 1e-4);
}

TEST_CASE("stacked model end-to-end gradients match finite differences") {
  Rng rng(17);
  Sequential<double> net;
  net.append<Conv2d<double>>(2, 4, 3, 2, 1, rng);
  net.append<GroupNorm<double>>(2, 4);
  net.append<ReLU<double>>();
  net.append<Conv2d<double>>(4, 4, 3, 1, 1, rng);
  net.append<GlobalAvgPool<double>>();
  net.append<Linear<double>>(4, 2, rng);
  Rng xr(18);
  REQUIRE(fd_check(net, random_tensor(2, 2, 8, 8, xr)) < 1e-4);
}

TEST_CASE("spectral normalization scales weights to unit spectral norm") {
  Rng rng(19);
  Conv2d<double> sn(3, 4, 3, 1, 1, rng, true, true);
  Rng xr(20);
  T x = random_tensor(2, 3, 6, 6, xr);
  // A few power iterations converge the estimate; the effective weight then
  // has leading singular value ~1: forward outputs stay bounded under scaling.
  for (int i = 0; i < 30; ++i) sn.forward(x, true);

  // Oracle: sigma via many-iteration power method on the raw weight matrix.
  std::vector<Param<double>*> ps;
  sn.collect_params(ps);
  auto& W = ps[0]->w;  // [4, 27]
  std::vector<double> u(4, 1.0), v(27, 0.0);
  double sigma = 0.0;
  for (int it = 0; it < 200; ++it) {
    for (auto& e : v) e = 0.0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 27; ++c) v[static_cast<std::size_t>(c)] += W[static_cast<std::size_t>(r) * 27 + c] * u[static_cast<std::size_t>(r)];
    double nv = 0.0;
    for (auto e : v) nv += e * e;
    nv = std::sqrt(nv);
    for (auto& e : v) e /= nv;
    for (auto& e : u) e = 0.0;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 27; ++c) u[static_cast<std::size_t>(r)] += W[static_cast<std::size_t>(r) * 27 + c] * v[static_cast<std::size_t>(c)];
    double nu = 0.0;
    for (auto e : u) nu += e * e;
    nu = std::sqrt(nu);
    for (auto& e : u) e /= nu;
    sigma = nu;
  }

  // Doubling the raw weights must leave the effective (normalized) output
  // unchanged up to the bias term: check via zero-bias comparison.
  Rng rng2(21);
  Conv2d<double> sn2(3, 4, 3, 1, 1, rng2, false, true);
  for (int i = 0; i < 30; ++i) sn2.forward(x, true);
  const T y1 = sn2.forward(x, false);
  std::vector<Param<double>*> ps2;
  sn2.collect_params(ps2);
  for (auto& e : ps2[0]->w) e *= 2.0;
  const T y2 = sn2.forward(x, false);
  for (std::size_t i = 0; i < y1.v.size(); ++i)
    REQUIRE(y1.v[i] == Catch::Approx(y2.v[i]).margin(1e-9));

  REQUIRE(sigma > 0.0);  // oracle ran; scale invariance is the real assertion
}

TEST_CASE("spectral conv backward equals unnormalized gradient over sigma") {
  // The backward pass treats the norm estimate as a constant; verify the
  // parameter gradient is exactly the plain-conv gradient divided by sigma.
  Rng rng(22);
  Conv2d<double> sn(2, 3, 3, 1, 1, rng, false, true);
  Rng rng_clone(22);
  Conv2d<double> plain(2, 3, 3, 1, 1, rng_clone, false, false);

  Rng xr(23);
  T x = random_tensor(2, 2, 5, 5, xr);
  T y = sn.forward(x, true);
  T proj = random_tensor(y.n, y.c, y.h, y.w, xr);

  std::vector<Param<double>*> psn, ppl;
  sn.collect_params(psn);
  plain.collect_params(ppl);
  REQUIRE(psn[0]->w == ppl[0]->w);  // identical seeds, identical init

  psn[0]->zero_grad();
  ppl[0]->zero_grad();
  sn.forward(x, false);  // eval: no u update, sigma frozen for comparison
  T dx_sn = sn.backward(proj);
  plain.forward(x, false);
  T dx_plain = plain.backward(proj);

  // Recover sigma from the gradient ratio and check consistency everywhere.
  double sigma = 0.0;
  for (std::size_t i = 0; i < psn[0]->g.size(); ++i) {
    if (std::abs(ppl[0]->g[i]) > 1e-8) {
      sigma = ppl[0]->g[i] / psn[0]->g[i];
      break;
    }
  }
  REQUIRE(sigma > 0.0);
  for (std::size_t i = 0; i < psn[0]->g.size(); ++i)
    REQUIRE(psn[0]->g[i] * sigma == Catch::Approx(ppl[0]->g[i]).margin(1e-8));
  for (std::size_t i = 0; i < dx_sn.v.size(); ++i)
    REQUIRE(dx_sn.v[i] * sigma == Catch::Approx(dx_plain.v[i]).margin(1e-8));
}

TEST_CASE("dropout masks deterministically and rescales") {
  Dropout<double> drop(0.5, 42);
  T x(2, 4, 3, 3);
  x.fill(1.0);
  const T y = drop.forward(x, true);
  int zeros = 0;
  for (double v : y.v) {
    REQUIRE((v == 0.0 || v == Catch::Approx(2.0)));
    zeros += v == 0.0 ? 1 : 0;
  }
  REQUIRE(zeros > 10);
  REQUIRE(zeros < 62);

  // Backward is exactly the stored mask.
  T dy(2, 4, 3, 3);
  dy.fill(3.0);
  const T dx = drop.backward(dy);
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    REQUIRE(dx.v[i] == Catch::Approx(y.v[i] * 3.0));

  // Identity in eval mode.
  const T ye = drop.forward(x, false);
  REQUIRE(ye.v == x.v);

  // Two dropouts with the same seed draw the same masks.
  Dropout<double> d1(0.3, 7), d2(0.3, 7);
  const T m1 = d1.forward(x, true);
  const T m2 = d2.forward(x, true);
  REQUIRE(m1.v == m2.v);
}

TEST_CASE("vector quantizer snaps to nearest codes straight-through") {
  Rng rng(30);
  VectorQuantizer<double> vq(5, 4, rng);
  Rng xr(31);
  T x = random_tensor(2, 4, 3, 3, xr);
  const T y = vq.forward(x, true);
  REQUIRE(y.n == 2);
  REQUIRE(vq.codebook_loss() > 0.0);
  REQUIRE(vq.codes_in_use() >= 1);

  // Every output vector must be a codebook row.
  std::vector<Param<double>*> ps;
  vq.collect_params(ps);
  const auto& E = ps[0]->w;
  for (int n = 0; n < 2; ++n)
    for (int p = 0; p < 9; ++p) {
      bool found = false;
      for (int k = 0; k < 5 && !found; ++k) {
        bool eq = true;
        for (int c = 0; c < 4; ++c)
          eq = eq && y.sample(n)[c * 9 + p] == E[static_cast<std::size_t>(k) * 4 + c];
        found = eq;
      }
      REQUIRE(found);
    }
}

TEST_CASE("vq codebook gradient matches finite differences") {
  Rng rng(32);
  VectorQuantizer<double> vq(6, 3, rng);
  Rng xr(33);
  T x = random_tensor(2, 3, 2, 2, xr, -1.5, 1.5);

  std::vector<Param<double>*> ps;
  vq.collect_params(ps);
  ps[0]->zero_grad();
  vq.forward(x, true);
  T zero_dy(2, 3, 2, 2);
  vq.backward(zero_dy);  // leaves only the quantization-loss gradient

  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < ps[0]->w.size(); ++i) {
    const double save = ps[0]->w[i];
    ps[0]->w[i] = save + eps;
    vq.forward(x, true);
    const double lp = vq.codebook_loss();
    ps[0]->w[i] = save - eps;
    vq.forward(x, true);
    const double lm = vq.codebook_loss();
    ps[0]->w[i] = save;
    const double numeric = (lp - lm) / (2.0 * eps);
    const double analytic = ps[0]->g[i];
    if (std::abs(numeric) > 1e-10 || std::abs(analytic) > 1e-10)
      worst = std::max(worst, rel_err(analytic, numeric));
  }
  REQUIRE(worst < 1e-4);
}

TEST_CASE("vq commitment gradient matches finite differences") {
  Rng rng(34);
  VectorQuantizer<double> vq(6, 3, rng, 0.25);
  Rng xr(35);
  T x = random_tensor(2, 3, 2, 2, xr, -1.5, 1.5);

  vq.forward(x, true);
  T zero_dy(2, 3, 2, 2);
  const T dx = vq.backward(zero_dy);  // pure commitment part

  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    const double save = x.v[i];
    x.v[i] = save + eps;
    vq.forward(x, true);
    const double lp = 0.25 * vq.codebook_loss();
    x.v[i] = save - eps;
    vq.forward(x, true);
    const double lm = 0.25 * vq.codebook_loss();
    x.v[i] = save;
    const double numeric = (lp - lm) / (2.0 * eps);
    if (std::abs(numeric) > 1e-10 || std::abs(dx.v[i]) > 1e-10)
      worst = std::max(worst, rel_err(dx.v[i], numeric));
  }
  REQUIRE(worst < 1e-4);

  // Straight-through: with nonzero dy the extra term is exactly dy.
  vq.forward(x, true);
  Rng pr(36);
  T dy = random_tensor(2, 3, 2, 2, pr);
  const T dx2 = vq.backward(dy);
  for (std::size_t i = 0; i < dx2.v.size(); ++i)
    REQUIRE(dx2.v[i] == Catch::Approx(dx.v[i] + dy.v[i]).margin(1e-12));
}

TEST_CASE("adam single step matches the reference formula") {
  Param<double> p;
  p.init({2});
  p.w = {1.0, -2.0};
  p.g = {0.5, -0.25};
  Adam<double> opt({&p}, 0.01);
  opt.step();
  // With zero state, mhat = g and vhat = g^2, so the step is
  // lr * g / (|g| + eps) = lr * sign(g) to within eps.
  REQUIRE(p.w[0] == Catch::Approx(1.0 - 0.01 * (0.5 / (0.5 + 1e-8))).epsilon(1e-12));
  REQUIRE(p.w[1] == Catch::Approx(-2.0 + 0.01 * (0.25 / (0.25 + 1e-8))).epsilon(1e-12));
}

TEST_CASE("adam minimizes a quadratic") {
  Param<double> p;
  p.init({1});
  p.w = {10.0};
  Adam<double> opt({&p}, 0.1);
  for (int i = 0; i < 2000; ++i) {
    p.g[0] = 2.0 * (p.w[0] - 3.0);
    opt.step();
  }
  REQUIRE(p.w[0] == Catch::Approx(3.0).margin(1e-3));
}

TEST_CASE("checkpoint round trip restores bit-exact float state") {
  Rng rng(40);
  Sequential<float> net;
  net.append<Conv2d<float>>(1, 3, 3, 1, 1, rng);
  net.append<GroupNorm<float>>(1, 3);
  net.append<Linear<float>>(3 * 4 * 4, 2, rng);

  std::vector<NamedTensor<float>> tensors;
  net.named_state("net.", tensors);
  std::vector<std::vector<float>> before;
  for (auto& t : tensors) before.push_back(*t.data);

  const auto dir = std::filesystem::temp_directory_path() / "la_ck_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";
  nlohmann::json header{{"kind", "unit-test"}, {"iteration", 7}};
  save_checkpoint(path, header, tensors);

  // Perturb, then restore.
  for (auto& t : tensors)
    for (auto& v : *t.data) v += 1.0f;
  const LoadedCheckpoint ck = load_checkpoint(path);
  REQUIRE(ck.header["iteration"] == 7);
  REQUIRE(ck.header["schema_version"] == 1);
  restore_tensors(ck, tensors);
  for (std::size_t i = 0; i < tensors.size(); ++i)
    REQUIRE(*tensors[i].data == before[i]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects corruption distinctly") {
  const auto dir = std::filesystem::temp_directory_path() / "la_ck_bad";
  std::filesystem::create_directories(dir);

  REQUIRE_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), MissingFileError);

  const auto junk = dir / "junk.ckpt";
  {
    std::ofstream f(junk, std::ios::binary);
    f << "definitely not a checkpoint";
  }
  REQUIRE_THROWS_AS(load_checkpoint(junk), SchemaError);

  // Valid file with one flipped blob byte -> checksum error.
  Rng rng(41);
  Linear<float> lin(4, 2, rng);
  std::vector<NamedTensor<float>> tensors;
  lin.named_state("m.", tensors);
  const auto good = dir / "good.ckpt";
  save_checkpoint(good, nlohmann::json{{"kind", "t"}}, tensors);
  auto bytes = [&] {
    std::ifstream f(good, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  }();
  bytes[bytes.size() - 12] ^= 0x40;  // inside the blob section
  const auto bad = dir / "bad.ckpt";
  {
    std::ofstream f(bad, std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  REQUIRE_THROWS_AS(load_checkpoint(bad), ChecksumError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("identically seeded layers initialize identically") {
  Rng a(55), b(55);
  Conv2d<float> c1(2, 4, 3, 1, 1, a);
  Conv2d<float> c2(2, 4, 3, 1, 1, b);
  std::vector<Param<float>*> p1, p2;
  c1.collect_params(p1);
  c2.collect_params(p2);
  REQUIRE(p1[0]->w == p2[0]->w);
}
