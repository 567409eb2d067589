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

#include "lensalign/optics.hpp"

using namespace lensalign;

namespace {

DomainConfig clean_domain(int side = 70) {
  DomainConfig d;
  d.label = DomainLabel::source_clean;
  d.image_side = side;
  return d;
}

DomainConfig noisy_target_domain(int side = 70) {
  DomainConfig d;
  d.label = DomainLabel::target;
  d.image_side = side;
  d.isp.gamma_lo = 1.7;
  d.isp.gamma_hi = 1.9;
  d.isp.scale_lo = 0.97;
  d.isp.scale_hi = 1.03;
  d.isp.noise_sigma = 0.03;
  d.isp.quantize_bits = 8;
  d.psf.smoothing_extra_px = 0.8;
  return d;
}

}  // namespace

TEST_CASE("psf kernels are normalized, non-negative, odd-sided") {
  const DomainConfig dom = clean_domain();
  Rng r(2024);
  for (int trial = 0; trial < 40; ++trial) {
    MisalignmentOffset off{r.uniform(-30.0, 30.0), r.uniform(-30.0, 30.0)};
    LensInstance lens = LensInstance::ideal();
    lens.tolerance_shift = {r.uniform(-5.0, 5.0), r.uniform(-5.0, 5.0)};
    lens.gain_parallel = r.uniform(0.8, 1.2);
    lens.gain_perp = r.uniform(0.8, 1.2);
    lens.coma_gain = r.uniform(0.8, 1.2);
    const FieldPoint field{r.uniform(-0.7, 0.7), r.uniform(-0.7, 0.7)};
    const PsfKernel k = make_psf(off, field, lens, dom);
    REQUIRE(k.side % 2 == 1);
    REQUIRE(k.side >= 3);
    REQUIRE(k.sum() == Catch::Approx(1.0).margin(1e-6));
    for (double v : k.values) REQUIRE(v >= 0.0);
  }
}

TEST_CASE("psf rejects non-finite offsets") {
  const DomainConfig dom = clean_domain();
  REQUIRE_THROWS_AS(make_psf({std::nan(""), 0.0}, {0.0, 0.0},
                             LensInstance::ideal(), dom),
                    InvalidInputError);
}

TEST_CASE("psf centroid tracks the decenter direction and magnitude") {
  const DomainConfig dom = clean_domain();
  const LensInstance lens = LensInstance::ideal();
  const FieldPoint axis{0.0, 0.0};

  // Analytic oracle: main lobe sits at the origin, the secondary lobe at
  // displacement t * u with weight w2, so the mixture centroid is w2 * t * u.
  auto analytic_cx = [&](double dx_um) {
    const double w2 = std::min(0.5, 0.02 * dx_um);
    return w2 * dom.psf.coma_coeff_px_per_um * dx_um;
  };

  const PsfKernel k0 = make_psf({0.0, 0.0}, axis, lens, dom);
  const PsfKernel k10 = make_psf({10.0, 0.0}, axis, lens, dom);
  const PsfKernel k20 = make_psf({20.0, 0.0}, axis, lens, dom);

  const auto [c0x, c0y] = k0.centroid();
  const auto [c10x, c10y] = k10.centroid();
  const auto [c20x, c20y] = k20.centroid();

  REQUIRE(std::abs(c0x) < 1e-9);
  REQUIRE(std::abs(c0y) < 1e-9);
  REQUIRE(c10x == Catch::Approx(analytic_cx(10.0)).margin(0.05));
  REQUIRE(c20x == Catch::Approx(analytic_cx(20.0)).margin(0.08));
  REQUIRE(c10x > 0.02);
  REQUIRE(c20x > c10x);
  REQUIRE(std::abs(c10y) < 1e-6);

  // Opposite decenter flips the centroid: the sign of the offset is visible.
  const PsfKernel km10 = make_psf({-10.0, 0.0}, axis, lens, dom);
  const auto [cmx, cmy] = km10.centroid();
  REQUIRE(cmx == Catch::Approx(-c10x).margin(1e-6));
}

TEST_CASE("psf elongates along the decenter axis as it grows") {
  const DomainConfig dom = clean_domain();
  const LensInstance lens = LensInstance::ideal();
  auto second_moment_x = [](const PsfKernel& k) {
    const double c = (k.side - 1) / 2.0;
    double m = 0.0;
    for (int y = 0; y < k.side; ++y)
      for (int x = 0; x < k.side; ++x) m += k.at(y, x) * (x - c) * (x - c);
    return m;
  };
  const double m10 = second_moment_x(make_psf({10.0, 0.0}, {0.0, 0.0}, lens, dom));
  const double m20 = second_moment_x(make_psf({20.0, 0.0}, {0.0, 0.0}, lens, dom));
  REQUIRE(m20 > m10 * 1.5);
}

TEST_CASE("smoothing_extra widens the kernel analytically") {
  DomainConfig plain = clean_domain();
  DomainConfig smooth = clean_domain();
  smooth.psf.smoothing_extra_px = 0.8;
  const LensInstance lens = LensInstance::ideal();
  auto var_x = [](const PsfKernel& k) {
    const double c = (k.side - 1) / 2.0;
    double m = 0.0;
    for (int y = 0; y < k.side; ++y)
      for (int x = 0; x < k.side; ++x) m += k.at(y, x) * (x - c) * (x - c);
    return m;
  };
  const double v0 = var_x(make_psf({0.0, 0.0}, {0.0, 0.0}, lens, plain));
  const double v1 = var_x(make_psf({0.0, 0.0}, {0.0, 0.0}, lens, smooth));
  // Gaussian pre-blur adds its variance: sigma^2 -> sigma^2 + 0.8^2.
  REQUIRE(v1 - v0 == Catch::Approx(0.64).margin(0.05));
}

TEST_CASE("crosshair canvas and crop bookkeeping") {
  const Image canvas = render_crosshair_canvas();
  int bright = 0;
  for (float v : canvas.px) bright += (v == 1.0f) ? 1 : 0;
  REQUIRE(bright == 2 * 90 - 1);  // 179

  const Image ideal70 = render_ideal_crosshair(clean_domain(70));
  REQUIRE(ideal70.side == 70);
  int bright70 = 0;
  for (float v : ideal70.px) bright70 += (v == 1.0f) ? 1 : 0;
  REQUIRE(bright70 == 2 * 70 - 1);
  REQUIRE(cross_intersection(ideal70) == std::pair<int, int>{35, 35});

  const Image ideal48 = render_ideal_crosshair(clean_domain(48));
  REQUIRE(cross_intersection(ideal48) == std::pair<int, int>{24, 24});

  DomainConfig tiny = clean_domain(16);
  REQUIRE_THROWS_AS(render_ideal_crosshair(tiny), InvalidConfigError);
}

TEST_CASE("identity isp is exact") {
  Image im(40);
  Rng r(3);
  for (float& v : im.px) v = static_cast<float>(r.uniform());
  const Image out = isp_forward(im, IspConfig::identity(), 77);
  REQUIRE(out.px == im.px);
}

TEST_CASE("gamma response matches the closed-form value") {
  IspConfig isp;
  isp.gamma_lo = 2.2;
  isp.gamma_hi = 2.2;
  Image im(32, 0.25f);
  const Image out = isp_forward(im, isp, 5);
  // 0.25^(1/2.2) = 0.53252...
  REQUIRE(static_cast<double>(out.at(0, 0)) ==
          Catch::Approx(0.5326).margin(1e-4));

  Image g(32, 0.5326f);
  const Image back = isp_inverse(g, isp);
  REQUIRE(static_cast<double>(back.at(0, 0)) ==
          Catch::Approx(0.25).margin(1e-3));

  // Round trip through forward-then-inverse at nominal gamma is tight.
  const Image rt = isp_inverse(out, isp);
  REQUIRE(static_cast<double>(rt.at(3, 3)) == Catch::Approx(0.25).margin(1e-3));
}

TEST_CASE("isp_forward validates its input range") {
  Image im(8, 1.5f);
  REQUIRE_THROWS_AS(isp_forward(im, IspConfig::identity(), 1),
                    InvalidInputError);
  Image neg(8, -0.2f);
  REQUIRE_THROWS_AS(isp_forward(neg, IspConfig::identity(), 1),
                    InvalidInputError);
}

TEST_CASE("isp noise is seed-deterministic and seed-sensitive") {
  IspConfig isp;
  isp.noise_sigma = 0.03;
  Image im(32, 0.5f);
  const Image a = isp_forward(im, isp, 11);
  const Image b = isp_forward(im, isp, 11);
  const Image c = isp_forward(im, isp, 12);
  REQUIRE(a.px == b.px);
  REQUIRE(a.px != c.px);
  REQUIRE(a.values_in_unit_range());
}

TEST_CASE("capture is deterministic and offset-sensitive") {
  const DomainConfig dom = noisy_target_domain();
  const LensInstance lens = LensInstance::ideal();

  const FovImageSet a = simulate_capture({4.0, -6.0}, lens, dom, 99);
  const FovImageSet b = simulate_capture({4.0, -6.0}, lens, dom, 99);
  REQUIRE(a.fovs.size() == 5);
  for (int i = 0; i < 5; ++i)
    REQUIRE(a.fovs[static_cast<std::size_t>(i)].px ==
            b.fovs[static_cast<std::size_t>(i)].px);

  const FovImageSet zero = simulate_capture({0.0, 0.0}, lens, dom, 99);
  const FovImageSet far = simulate_capture({30.0, 0.0}, lens, dom, 99);
  REQUIRE(l2_diff(zero.fovs[0], far.fovs[0]) > 1e-2);

  REQUIRE_THROWS_AS(
      simulate_capture({std::nan(""), 0.0}, lens, dom, 1),
      InvalidInputError);
}

TEST_CASE("sharpness falls monotonically with decenter magnitude") {
  DomainConfig dom = clean_domain(70);  // noiseless, identity isp
  const LensInstance lens = LensInstance::ideal();
  double prev = 1e300;
  for (double mag : {0.0, 8.0, 16.0, 24.0}) {
    const FovImageSet cap = simulate_capture({mag, 0.0}, lens, dom, 5);
    double e = 0.0;
    for (const auto& im : cap.fovs) e += gradient_energy(im);
    REQUIRE(e < prev);
    prev = e;
  }
}

TEST_CASE("capture images stay within the unit range") {
  const DomainConfig dom = noisy_target_domain(50);
  LensInstance lens = LensInstance::ideal();
  lens.tolerance_shift = {3.0, -2.0};
  const FovImageSet cap = simulate_capture({12.0, 9.0}, lens, dom, 17);
  for (const auto& im : cap.fovs) {
    REQUIRE(im.side == 50);
    REQUIRE(im.values_in_unit_range());
  }
}

TEST_CASE("field layout validation rejects malformed sets") {
  DomainConfig dom = clean_domain();
  dom.fields = {{0.0, 0.0}, {0.7, 0.7}, {-0.7, 0.7}, {0.7, -0.7}};
  REQUIRE_THROWS_AS(dom.validate(), InvalidConfigError);
  dom.fields = {{0.0, 0.0}, {0.7, 0.7}, {-0.7, 0.7}, {0.7, -0.7}, {-0.5, -0.7}};
  REQUIRE_THROWS_AS(dom.validate(), InvalidConfigError);
  dom.fields = default_fields();
  REQUIRE_NOTHROW(dom.validate());
}
