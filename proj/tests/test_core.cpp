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

#include <atomic>
#include <cmath>
#include <set>
#include <vector>

#include "lensalign/common.hpp"
#include "lensalign/image.hpp"
#include "lensalign/types.hpp"

using namespace lensalign;

TEST_CASE("rng is deterministic for a fixed seed") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    REQUIRE(a.next_u64() == b.next_u64());
  }
  Rng c(42), d(43);
  bool all_equal = true;
  for (int i = 0; i < 16; ++i) all_equal &= (c.next_u64() == d.next_u64());
  REQUIRE_FALSE(all_equal);
}

TEST_CASE("uniform stays in range and covers it") {
  Rng r(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  REQUIRE(lo < 0.01);
  REQUIRE(hi > 0.99);

  const double v = Rng(1).uniform(2.0, 2.0);
  REQUIRE(v == 2.0);  // degenerate range collapses exactly
}

TEST_CASE("normal deviates have the right first two moments") {
  Rng r(123);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  REQUIRE(std::abs(mean) < 0.02);
  REQUIRE(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("below is exact-range and roughly uniform") {
  Rng r(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const int k = r.below(7);
    REQUIRE(k >= 0);
    REQUIRE(k < 7);
    counts[static_cast<std::size_t>(k)]++;
  }
  for (int c : counts) {
    REQUIRE(c > 9000);
    REQUIRE(c < 11000);
  }
  REQUIRE_THROWS_AS(r.below(0), InvalidInputError);
}

TEST_CASE("stable_seed mixes order-sensitively") {
  REQUIRE(stable_seed(1, 2) != stable_seed(2, 1));
  REQUIRE(stable_seed(1, 2, 3) != stable_seed(1, 2, 4));
  REQUIRE(stable_seed(0) != stable_seed(1));
  REQUIRE(stable_seed(5, 0) != stable_seed(5));
  // repeated evaluation is stable
  REQUIRE(stable_seed(99, 3, 7) == stable_seed(99, 3, 7));
  // a decent spread over small inputs
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 64; ++i)
    for (std::uint64_t j = 0; j < 64; ++j) seen.insert(stable_seed(i, j));
  REQUIRE(seen.size() == 64u * 64u);
}

TEST_CASE("fnv1a matches the published test vectors") {
  REQUIRE(fnv1a_hex("") == "cbf29ce484222325");
  REQUIRE(fnv1a_hex("a") == "af63dc4c8601ec8c");
  REQUIRE(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("parallel_for result does not depend on worker count") {
  const std::int64_t n = 1000;
  std::vector<std::int64_t> serial(static_cast<std::size_t>(n), 0);
  std::vector<std::int64_t> parallel(static_cast<std::size_t>(n), 0);
  parallel_for(n, 1, [&](std::int64_t i) { serial[static_cast<std::size_t>(i)] = i * i; });
  parallel_for(n, 4, [&](std::int64_t i) { parallel[static_cast<std::size_t>(i)] = i * i; });
  REQUIRE(serial == parallel);

  std::atomic<int> calls{0};
  parallel_for(0, 4, [&](std::int64_t) { calls++; });
  REQUIRE(calls == 0);
}

TEST_CASE("offset arithmetic and validity") {
  const MisalignmentOffset a{3.0, -4.0};
  REQUIRE(a.norm() == Catch::Approx(5.0));
  REQUIRE((a + MisalignmentOffset{1.0, 1.0}).dx_um == Catch::Approx(4.0));
  REQUIRE((-a).dy_um == Catch::Approx(4.0));
  REQUIRE(a.finite());
  const MisalignmentOffset bad{std::nan(""), 0.0};
  REQUIRE_FALSE(bad.finite());
}

TEST_CASE("quantize rounds to 8-bit levels") {
  Image im(2, 0.5f);
  quantize(im, 8);
  REQUIRE(im.at(0, 0) == Catch::Approx(128.0 / 255.0));
  Image id(2, 0.3f);
  quantize(id, 0);
  REQUIRE(id.at(0, 0) == 0.3f);
}

TEST_CASE("crop_centered window semantics and bounds") {
  Image im(10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) im.at(y, x) = static_cast<float>(10 * y + x);
  const Image c = crop_centered(im, 4, 5, 5);
  REQUIRE(c.side == 4);
  REQUIRE(c.at(0, 0) == 33.0f);  // starts at (5 - 2, 5 - 2)
  REQUIRE_THROWS_AS(crop_centered(im, 8, 1, 1), InvalidInputError);
}

TEST_CASE("convolution identity and shift kernels") {
  Image im(9);
  Rng r(5);
  for (float& v : im.px) v = static_cast<float>(r.uniform());

  std::vector<double> ident(9, 0.0);
  ident[4] = 1.0;  // 3x3 delta at center
  const Image same = convolve_same(im, ident, 3);
  for (std::size_t i = 0; i < im.px.size(); ++i)
    REQUIRE(same.px[i] == Catch::Approx(im.px[i]).margin(1e-7));

  std::vector<double> shift(9, 0.0);
  shift[5] = 1.0;  // delta at q = (0, +1): out(y, x) = in(y, x - 1)
  const Image sh = convolve_same(im, shift, 3);
  for (int y = 0; y < 9; ++y)
    for (int x = 1; x < 9; ++x)
      REQUIRE(sh.at(y, x) == Catch::Approx(im.at(y, x - 1)).margin(1e-7));

  REQUIRE_THROWS_AS(convolve_same(im, ident, 4), InvalidInputError);
}

TEST_CASE("gaussian blur smooths without inventing mass") {
  Image im(31);
  im.at(15, 15) = 1.0f;
  const Image b = gaussian_blur(im, 1.5);
  double mass = 0.0;
  for (float v : b.px) mass += v;
  REQUIRE(mass == Catch::Approx(1.0).margin(1e-6));
  REQUIRE(gradient_energy(b) < gradient_energy(im));
  const Image noop = gaussian_blur(im, 0.0);
  REQUIRE(noop.px == im.px);
}

TEST_CASE("centroid and cross intersection") {
  Image im(11);
  im.at(3, 7) = 2.0f;
  const auto [cx, cy] = centroid(im);
  REQUIRE(cx == Catch::Approx(7.0));
  REQUIRE(cy == Catch::Approx(3.0));

  Image cross(21);
  for (int i = 0; i < 21; ++i) {
    cross.at(8, i) = 1.0f;
    cross.at(i, 13) = 1.0f;
  }
  const auto [row, col] = cross_intersection(cross);
  REQUIRE(row == 8);
  REQUIRE(col == 13);

  Image empty(4);
  REQUIRE_THROWS_AS(centroid(empty), InvalidInputError);
}
