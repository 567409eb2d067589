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
#include <cstdint>
#include <utility>
#include <vector>

#include "lensalign/common.hpp"

namespace lensalign {

/// Square grayscale image, row-major float32 in [0, 1]. Row index is y
/// (downward), column index is x. Kept deliberately small; heavy math runs on
/// double accumulators inside the free functions below.
struct Image {
  int side = 0;
  std::vector<float> px;

  Image() = default;
  explicit Image(int s, float fill = 0.0f)
      : side(s), px(static_cast<std::size_t>(s) * static_cast<std::size_t>(s),
                    fill) {}

  float& at(int y, int x) {
    return px[static_cast<std::size_t>(y) * static_cast<std::size_t>(side) +
              static_cast<std::size_t>(x)];
  }
  float at(int y, int x) const {
    return px[static_cast<std::size_t>(y) * static_cast<std::size_t>(side) +
              static_cast<std::size_t>(x)];
  }
  std::size_t size() const { return px.size(); }

  bool values_in_unit_range(float eps = 0.0f) const {
    for (float v : px) {
      if (!(v >= -eps && v <= 1.0f + eps)) return false;
    }
    return true;
  }
};

inline void clamp_unit(Image& im) {
  for (float& v : im.px) v = std::clamp(v, 0.0f, 1.0f);
}

/// Round to b-bit levels (b = 8 -> 255 levels). Matches the on-disk codec.
inline void quantize(Image& im, int bits) {
  if (bits == 0) return;
  const float levels = static_cast<float>((1 << bits) - 1);
  for (float& v : im.px)
    v = std::round(v * levels) / levels;
}

/// Crop a window of size out_side whose center lands on pixel (cy, cx) of the
/// input; for even out_side the window starts at cy - out_side / 2. The
/// window must lie fully inside the input.
inline Image crop_centered(const Image& in, int out_side, int cy, int cx) {
  const int y0 = cy - out_side / 2;
  const int x0 = cx - out_side / 2;
  if (y0 < 0 || x0 < 0 || y0 + out_side > in.side || x0 + out_side > in.side)
    throw InvalidInputError("crop_centered: window exceeds image bounds");
  Image out(out_side);
  for (int y = 0; y < out_side; ++y)
    for (int x = 0; x < out_side; ++x)
      out.at(y, x) = in.at(y0 + y, x0 + x);
  return out;
}

/// True 2D convolution (kernel flipped), zero padding, same output size.
/// Kernel side must be odd. Accumulation in double.
template <class K>
Image convolve_same(const Image& in, const std::vector<K>& kernel,
                    int ks) {
  if (ks <= 0 || ks % 2 == 0)
    throw InvalidInputError("convolve_same: kernel side must be odd");
  const int r = ks / 2;
  const int n = in.side;
  Image out(n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      const int qy_lo = std::max(-r, y - (n - 1));
      const int qy_hi = std::min(r, y);
      const int qx_lo = std::max(-r, x - (n - 1));
      const int qx_hi = std::min(r, x);
      for (int qy = qy_lo; qy <= qy_hi; ++qy) {
        const K* krow =
            kernel.data() + static_cast<std::size_t>(qy + r) * ks + r;
        const float* irow =
            in.px.data() + static_cast<std::size_t>(y - qy) * n + x;
        for (int qx = qx_lo; qx <= qx_hi; ++qx)
          acc += static_cast<double>(krow[qx]) *
                 static_cast<double>(irow[-qx]);
      }
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

/// Separable Gaussian blur, zero padding, kernel truncated at ceil(3 sigma)
/// and renormalized. sigma <= 0 returns the input unchanged.
inline Image gaussian_blur(const Image& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
    k[static_cast<std::size_t>(i + r)] = v;
    s += v;
  }
  for (double& v : k) v /= s;

  const int n = in.side;
  std::vector<double> tmp(in.size(), 0.0);
  // horizontal pass
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      const int lo = std::max(-r, -x), hi = std::min(r, n - 1 - x);
      for (int i = lo; i <= hi; ++i)
        acc += k[static_cast<std::size_t>(i + r)] * in.at(y, x + i);
      tmp[static_cast<std::size_t>(y) * n + x] = acc;
    }
  // vertical pass
  Image out(n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      const int lo = std::max(-r, -y), hi = std::min(r, n - 1 - y);
      for (int i = lo; i <= hi; ++i)
        acc += k[static_cast<std::size_t>(i + r)] *
               tmp[static_cast<std::size_t>(y + i) * n + x];
      out.at(y, x) = static_cast<float>(acc);
    }
  return out;
}

/// Separable Gaussian blur with an explicit odd kernel size, zero padding,
/// weights normalized over the k taps. sigma <= 0 returns the input.
inline Image gaussian_blur_fixed_kernel(const Image& in, int kernel_size,
                                        double sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw InvalidInputError("gaussian_blur_fixed_kernel: kernel must be odd");
  if (sigma <= 0.0) return in;
  const int r = kernel_size / 2;
  std::vector<double> k(static_cast<std::size_t>(kernel_size));
  double s = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
    k[static_cast<std::size_t>(i + r)] = v;
    s += v;
  }
  for (double& v : k) v /= s;

  const int n = in.side;
  std::vector<double> tmp(in.size(), 0.0);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      const int lo = std::max(-r, -x), hi = std::min(r, n - 1 - x);
      for (int i = lo; i <= hi; ++i)
        acc += k[static_cast<std::size_t>(i + r)] * in.at(y, x + i);
      tmp[static_cast<std::size_t>(y) * n + x] = acc;
    }
  Image out(n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double acc = 0.0;
      const int lo = std::max(-r, -y), hi = std::min(r, n - 1 - y);
      for (int i = lo; i <= hi; ++i)
        acc += k[static_cast<std::size_t>(i + r)] *
               tmp[static_cast<std::size_t>(y + i) * n + x];
      out.at(y, x) = static_cast<float>(acc);
    }
  return out;
}

/// Sum of squared forward differences; a simple focus/sharpness measure.
inline double gradient_energy(const Image& im) {
  double acc = 0.0;
  const int n = im.side;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (x + 1 < n) {
        const double d = static_cast<double>(im.at(y, x + 1)) - im.at(y, x);
        acc += d * d;
      }
      if (y + 1 < n) {
        const double d = static_cast<double>(im.at(y + 1, x)) - im.at(y, x);
        acc += d * d;
      }
    }
  return acc;
}

/// Intensity-weighted centroid in pixel coordinates, (cx, cy).
inline std::pair<double, double> centroid(const Image& im) {
  double sx = 0.0, sy = 0.0, s = 0.0;
  for (int y = 0; y < im.side; ++y)
    for (int x = 0; x < im.side; ++x) {
      const double v = im.at(y, x);
      s += v;
      sx += v * x;
      sy += v * y;
    }
  if (s <= 0.0) throw InvalidInputError("centroid: image has no mass");
  return {sx / s, sy / s};
}

/// Locate a crosshair intersection as (row, col) of the maximal row sum and
/// maximal column sum. Robust to blur and mild noise; ties pick the first.
inline std::pair<int, int> cross_intersection(const Image& im) {
  const int n = im.side;
  double best_r = -1.0, best_c = -1.0;
  int row = 0, col = 0;
  for (int y = 0; y < n; ++y) {
    double s = 0.0;
    for (int x = 0; x < n; ++x) s += im.at(y, x);
    if (s > best_r) {
      best_r = s;
      row = y;
    }
  }
  for (int x = 0; x < n; ++x) {
    double s = 0.0;
    for (int y = 0; y < n; ++y) s += im.at(y, x);
    if (s > best_c) {
      best_c = s;
      col = x;
    }
  }
  return {row, col};
}

inline double mean_abs_diff(const Image& a, const Image& b) {
  if (a.side != b.side)
    throw InvalidInputError("mean_abs_diff: image sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.px.size(); ++i)
    acc += std::abs(static_cast<double>(a.px[i]) - b.px[i]);
  return acc / static_cast<double>(a.px.size());
}

inline double l2_diff(const Image& a, const Image& b) {
  if (a.side != b.side) throw InvalidInputError("l2_diff: image sizes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    const double d = static_cast<double>(a.px[i]) - b.px[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace lensalign
