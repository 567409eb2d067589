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
#include <vector>

#include "lensalign/common.hpp"
#include "lensalign/image.hpp"
#include "lensalign/types.hpp"

namespace lensalign {

// The crosshair target is rendered on a fixed oversized canvas and cropped to
// the domain's image size only after blur and the forward pipeline, so kernel
// support never runs off the finished image.
constexpr int kCanvasSide = 90;
constexpr int kCanvasCenter = kCanvasSide / 2;

inline std::vector<FieldPoint> default_fields() {
  return {{0.0, 0.0}, {0.7, 0.7}, {-0.7, 0.7}, {0.7, -0.7}, {-0.7, -0.7}};
}

inline const std::vector<FieldPoint>& resolved_fields(
    const DomainConfig& domain) {
  static const std::vector<FieldPoint> defaults = default_fields();
  return domain.fields.empty() ? defaults : domain.fields;
}

inline void DomainConfig::validate() const {
  psf.validate();
  isp.validate();
  if (image_side < 32 || image_side > kCanvasSide)
    throw InvalidConfigError("domain: image_side must be in [32, 90]");
  const auto& f = resolved_fields(*this);
  if (f.size() != 5)
    throw InvalidConfigError("domain: exactly 5 field positions required");
  int centers = 0;
  double a = -1.0, b = -1.0;
  bool seen[2][2] = {{false, false}, {false, false}};
  for (const auto& p : f) {
    if (p.fx == 0.0 && p.fy == 0.0) {
      ++centers;
      continue;
    }
    const double ax = std::abs(p.fx), ay = std::abs(p.fy);
    if (ax <= 0.0 || ay <= 0.0 || ax > 1.0 || ay > 1.0)
      throw InvalidConfigError("domain: off-axis fields must have |fx|,|fy| in (0,1]");
    if (a < 0.0) {
      a = ax;
      b = ay;
    } else if (std::abs(ax - a) > 1e-12 || std::abs(ay - b) > 1e-12) {
      throw InvalidConfigError("domain: off-axis fields must be symmetric");
    }
    seen[p.fx > 0.0][p.fy > 0.0] = true;
  }
  if (centers != 1 || !seen[0][0] || !seen[0][1] || !seen[1][0] || !seen[1][1])
    throw InvalidConfigError(
        "domain: fields must be one center point plus 4 symmetric corners");
}

// ---------------------------------------------------------------------------
// PSF model.
//
// The effective decenter u = offset + tolerance_shift drives an elliptical
// Gaussian elongated along u (astigmatism-like growth) plus a weaker second
// lobe displaced along u whose throw grows with the field radius (coma-like).
// The second lobe makes +u and -u distinguishable. smoothing_extra is folded
// into the covariance analytically, which is exactly a Gaussian pre-blur.

inline PsfKernel make_psf(const MisalignmentOffset& offset,
                          const FieldPoint& field, const LensInstance& lens,
                          const DomainConfig& domain) {
  if (!offset.finite())
    throw InvalidInputError("make_psf: offset must be finite");
  const PsfFamilyParams& p = domain.psf;

  const double ux = offset.dx_um + lens.tolerance_shift.dx_um;
  const double uy = offset.dy_um + lens.tolerance_shift.dy_um;
  const double un = std::hypot(ux, uy);

  double sig_par = p.base_sigma_px * lens.gain_parallel +
                   p.astig_coeff_px_per_um * un;
  double sig_perp = p.base_sigma_px * lens.gain_perp +
                    0.4 * p.astig_coeff_px_per_um * un;
  const double s2 = p.smoothing_extra_px * p.smoothing_extra_px;
  sig_par = std::sqrt(sig_par * sig_par + s2);
  sig_perp = std::sqrt(sig_perp * sig_perp + s2);

  double ex = 1.0, ey = 0.0;
  if (un > 1e-12) {
    ex = ux / un;
    ey = uy / un;
  }

  const double throw_scale = p.coma_coeff_px_per_um * lens.coma_gain *
                             (1.0 + field.norm());
  const double dx_px = throw_scale * ux;
  const double dy_px = throw_scale * uy;
  const double w2 = std::min(0.5, 0.02 * un);
  const double w1 = 1.0 - w2;

  const double sig_max = std::max(sig_par, sig_perp);
  const double disp = std::hypot(dx_px, dy_px);
  int radius = static_cast<int>(std::ceil(3.0 * sig_max + disp));
  radius = std::clamp(radius, 1, (kCanvasSide - 2) / 2);

  PsfKernel k;
  k.side = 2 * radius + 1;
  k.pixel_pitch_um = 1.0;
  k.values.assign(static_cast<std::size_t>(k.side) * k.side, 0.0);

  const double inv2p = 1.0 / (2.0 * sig_par * sig_par);
  const double inv2q = 1.0 / (2.0 * sig_perp * sig_perp);
  auto lobe = [&](double vx, double vy) {
    const double t1 = vx * ex + vy * ey;
    const double t2 = -vx * ey + vy * ex;
    return std::exp(-t1 * t1 * inv2p - t2 * t2 * inv2q);
  };

  double sum = 0.0;
  for (int y = 0; y < k.side; ++y) {
    for (int x = 0; x < k.side; ++x) {
      const double vx = x - radius;
      const double vy = y - radius;
      double v = w1 * lobe(vx, vy);
      if (w2 > 0.0) v += w2 * lobe(vx - dx_px, vy - dy_px);
      k.values[static_cast<std::size_t>(y) * k.side + x] = v;
      sum += v;
    }
  }
  for (double& v : k.values) v /= sum;
  return k;
}

/// Binary crosshair: full-width horizontal and vertical 1-pixel lines
/// crossing at the canvas center. 2 * 90 - 1 = 179 bright pixels.
inline Image render_crosshair_canvas() {
  Image im(kCanvasSide);
  for (int i = 0; i < kCanvasSide; ++i) {
    im.at(kCanvasCenter, i) = 1.0f;
    im.at(i, kCanvasCenter) = 1.0f;
  }
  return im;
}

/// Ideal (pre-optics) crosshair in linear intensity, cropped to the domain's
/// image size. The intersection lands at (side/2, side/2).
inline Image render_ideal_crosshair(const DomainConfig& domain) {
  domain.validate();
  return crop_centered(render_crosshair_canvas(), domain.image_side,
                       kCanvasCenter, kCanvasCenter);
}

/// Forward camera pipeline: random exposure scale, random gamma, optional
/// extra optical low-pass, sensor noise, quantization. With the identity
/// config the output equals the input exactly.
inline Image isp_forward(const Image& linear, const IspConfig& isp,
                         std::uint64_t rng_seed) {
  isp.validate();
  if (!linear.values_in_unit_range(1e-5f))
    throw InvalidInputError("isp_forward: input values must lie in [0, 1]");

  Rng rng(rng_seed);
  // Scale and gamma are always drawn so the consumed stream length does not
  // depend on whether the ranges are degenerate.
  const double scale = rng.uniform(isp.scale_lo, isp.scale_hi);
  const double gamma = rng.uniform(isp.gamma_lo, isp.gamma_hi);

  Image out = linear;
  if (scale != 1.0) {
    for (float& v : out.px) v = static_cast<float>(v * scale);
  }
  clamp_unit(out);
  if (gamma != 1.0) {
    const double inv_g = 1.0 / gamma;
    for (float& v : out.px)
      v = static_cast<float>(std::pow(static_cast<double>(v), inv_g));
  }
  if (isp.extra_blur_sigma > 0.0) out = gaussian_blur(out, isp.extra_blur_sigma);
  if (isp.noise_sigma > 0.0) {
    for (float& v : out.px)
      v = static_cast<float>(v + isp.noise_sigma * rng.normal());
    clamp_unit(out);
  }
  quantize(out, isp.quantize_bits);
  return out;
}

/// Inverse pipeline used to linearize the rendered target before blur. Only
/// the nominal (midpoint) gamma is inverted; per-capture jitter, noise and
/// quantization are not invertible and are left alone by design.
inline Image isp_inverse(const Image& image, const IspConfig& isp) {
  const double g = isp.nominal_gamma();
  if (g == 1.0) return image;
  Image out = image;
  for (float& v : out.px)
    v = static_cast<float>(std::pow(static_cast<double>(v), g));
  return out;
}

/// Render one capture: five field images of the crosshair seen through a
/// lens decentered by `offset` (plus the unit's own tolerance shift).
/// Deterministic in (offset, lens, domain, rng_seed).
inline FovImageSet simulate_capture(const MisalignmentOffset& offset,
                                    const LensInstance& lens,
                                    const DomainConfig& domain,
                                    std::uint64_t rng_seed) {
  if (!offset.finite())
    throw InvalidInputError("simulate_capture: offset must be finite");
  domain.validate();

  const Image canvas = render_crosshair_canvas();
  const Image linear_scene = isp_inverse(canvas, domain.isp);
  const IspConfig effective_isp = domain.label == DomainLabel::source_clean
                                      ? IspConfig::identity()
                                      : domain.isp;

  FovImageSet set;
  set.offset = offset;
  set.lens_id = lens.lens_id;
  set.rng_seed = rng_seed;
  const auto& fields = resolved_fields(domain);
  set.fovs.reserve(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const PsfKernel k = make_psf(offset, fields[i], lens, domain);
    const Image blurred = convolve_same(linear_scene, k.values, k.side);
    const Image shot = isp_forward(blurred, effective_isp,
                                   stable_seed(rng_seed, i));
    set.fovs.push_back(
        crop_centered(shot, domain.image_side, kCanvasCenter, kCanvasCenter));
  }
  set.validate();
  return set;
}

}  // namespace lensalign
