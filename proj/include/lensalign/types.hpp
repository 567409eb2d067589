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
#include <cstdint>
#include <string>
#include <vector>

#include "lensalign/common.hpp"
#include "lensalign/image.hpp"

namespace lensalign {

/// Lateral lens decenter in micrometers, (dx, dy). Also used for stage
/// commands and predictions; all are points in the same 2D offset space.
struct MisalignmentOffset {
  double dx_um = 0.0;
  double dy_um = 0.0;

  bool finite() const { return std::isfinite(dx_um) && std::isfinite(dy_um); }
  double norm() const { return std::hypot(dx_um, dy_um); }

  MisalignmentOffset operator+(const MisalignmentOffset& o) const {
    return {dx_um + o.dx_um, dy_um + o.dy_um};
  }
  MisalignmentOffset operator-(const MisalignmentOffset& o) const {
    return {dx_um - o.dx_um, dy_um - o.dy_um};
  }
  MisalignmentOffset operator-() const { return {-dx_um, -dy_um}; }
  bool operator==(const MisalignmentOffset& o) const {
    return dx_um == o.dx_um && dy_um == o.dy_um;
  }
};

/// Normalized field-of-view position; (0,0) is the optical axis, corners are
/// at +-0.7 or so. Magnitude scales the field-dependent part of the PSF.
struct FieldPoint {
  double fx = 0.0;
  double fy = 0.0;
  double norm() const { return std::hypot(fx, fy); }
};

/// One physical lens unit. tolerance_shift models the per-unit assembly
/// decenter; the gain factors model unit-to-unit variation of the blur
/// response. The ideal reference unit has zero shift and unit gains.
struct LensInstance {
  int lens_id = 0;
  MisalignmentOffset tolerance_shift;
  double gain_parallel = 1.0;
  double gain_perp = 1.0;
  double coma_gain = 1.0;
  std::uint64_t rng_seed = 0;

  static LensInstance ideal(int id = 0) {
    LensInstance l;
    l.lens_id = id;
    return l;
  }
};

/// Rasterized point-spread function on the image pixel grid. Values are
/// non-negative and sum to 1; side is odd with the nominal center at
/// (side/2, side/2).
struct PsfKernel {
  int side = 0;
  double pixel_pitch_um = 1.0;
  std::vector<double> values;

  double at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(side) +
                  static_cast<std::size_t>(x)];
  }
  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  /// Intensity centroid in pixels relative to the kernel center, (cx, cy).
  std::pair<double, double> centroid() const {
    const double c = (side - 1) / 2.0;
    double sx = 0.0, sy = 0.0, s = 0.0;
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        const double v = at(y, x);
        s += v;
        sx += v * (x - c);
        sy += v * (y - c);
      }
    return {sx / s, sy / s};
  }
};

/// Forward camera-pipeline model: linear scene -> scale jitter -> gamma ->
/// optional extra blur -> sensor noise -> quantization. Ranges are sampled
/// per capture; the inverse uses the nominal (midpoint) gamma only.
struct IspConfig {
  double gamma_lo = 1.0;
  double gamma_hi = 1.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  double noise_sigma = 0.0;
  int quantize_bits = 0;  // 0 = off, else 8
  double extra_blur_sigma = 0.0;

  static IspConfig identity() { return IspConfig{}; }

  double nominal_gamma() const { return 0.5 * (gamma_lo + gamma_hi); }

  bool is_identity() const {
    return gamma_lo == 1.0 && gamma_hi == 1.0 && scale_lo == 1.0 &&
           scale_hi == 1.0 && noise_sigma == 0.0 && quantize_bits == 0 &&
           extra_blur_sigma == 0.0;
  }

  void validate() const {
    if (!(gamma_lo > 0.0 && gamma_hi >= gamma_lo && gamma_hi <= 8.0))
      throw InvalidConfigError("isp: gamma range must satisfy 0 < lo <= hi <= 8");
    if (!(scale_lo > 0.0 && scale_hi >= scale_lo && scale_hi <= 2.0))
      throw InvalidConfigError("isp: scale range must satisfy 0 < lo <= hi <= 2");
    if (!(noise_sigma >= 0.0 && noise_sigma <= 0.5))
      throw InvalidConfigError("isp: noise_sigma must be in [0, 0.5]");
    if (quantize_bits != 0 && quantize_bits != 8)
      throw InvalidConfigError("isp: quantize_bits must be 0 or 8");
    if (!(extra_blur_sigma >= 0.0 && extra_blur_sigma <= 5.0))
      throw InvalidConfigError("isp: extra_blur_sigma must be in [0, 5]");
  }
};

/// Parametric blur family shared by all lenses of one domain. Units:
/// base_sigma and smoothing_extra in pixels, the coefficients in pixels per
/// micrometer of decenter.
struct PsfFamilyParams {
  double base_sigma_px = 1.1;
  double astig_coeff_px_per_um = 0.12;
  double coma_coeff_px_per_um = 0.10;
  double smoothing_extra_px = 0.0;

  void validate() const {
    if (!(base_sigma_px > 0.05 && base_sigma_px <= 10.0))
      throw InvalidConfigError("psf: base_sigma_px must be in (0.05, 10]");
    if (!(astig_coeff_px_per_um >= 0.0 && astig_coeff_px_per_um <= 1.0))
      throw InvalidConfigError("psf: astig_coeff_px_per_um must be in [0, 1]");
    if (!(coma_coeff_px_per_um >= 0.0 && coma_coeff_px_per_um <= 1.0))
      throw InvalidConfigError("psf: coma_coeff_px_per_um must be in [0, 1]");
    if (!(smoothing_extra_px >= 0.0 && smoothing_extra_px <= 5.0))
      throw InvalidConfigError("psf: smoothing_extra_px must be in [0, 5]");
  }
};

enum class DomainLabel { source_clean, source_isp, target };

inline std::string to_string(DomainLabel d) {
  switch (d) {
    case DomainLabel::source_clean: return "source_clean";
    case DomainLabel::source_isp: return "source_isp";
    case DomainLabel::target: return "target";
  }
  throw InvalidInputError("unknown domain label");
}

inline DomainLabel domain_label_from_string(const std::string& s) {
  if (s == "source_clean") return DomainLabel::source_clean;
  if (s == "source_isp") return DomainLabel::source_isp;
  if (s == "target") return DomainLabel::target;
  throw SchemaError("unknown domain label: " + s);
}

/// Everything the simulator needs to render one domain: blur family, camera
/// pipeline, crop size, and the five capture field positions.
struct DomainConfig {
  DomainLabel label = DomainLabel::source_clean;
  PsfFamilyParams psf;
  IspConfig isp;
  int image_side = 70;
  std::vector<FieldPoint> fields;  // empty = default 5-point layout

  void validate() const;
};

/// One capture: the five per-field images plus the offset and seed that
/// produced them. Images are square, image_side x image_side, values [0, 1].
struct FovImageSet {
  MisalignmentOffset offset;
  int lens_id = 0;
  std::uint64_t rng_seed = 0;
  std::vector<Image> fovs;

  void validate() const {
    if (fovs.size() != 5)
      throw InvalidInputError("FovImageSet: expected exactly 5 field images");
    for (const auto& im : fovs) {
      if (im.side != fovs[0].side)
        throw InvalidInputError("FovImageSet: field images must share one size");
    }
  }
};

}  // namespace lensalign
