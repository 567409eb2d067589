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

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lensalign/image.hpp"

namespace lensalign {

inline cv::Mat to_mat8u(const Image& im) {
  cv::Mat m(im.side, im.side, CV_8UC1);
  for (int y = 0; y < im.side; ++y) {
    auto* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < im.side; ++x) {
      const int v =
          static_cast<int>(std::lround(static_cast<double>(im.at(y, x)) * 255.0));
      row[x] = static_cast<unsigned char>(std::clamp(v, 0, 255));
    }
  }
  return m;
}

inline Image from_mat8u(const cv::Mat& m) {
  if (m.empty() || m.rows != m.cols || m.type() != CV_8UC1)
    throw SchemaError("expected square 8-bit grayscale image data");
  Image im(m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < m.cols; ++x)
      im.at(y, x) = static_cast<float>(row[x]) / 255.0f;
  }
  return im;
}

/// Deterministic PNG bytes for an image (fixed compression settings).
inline std::vector<unsigned char> encode_png(const Image& im) {
  std::vector<unsigned char> buf;
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 3};
  if (!cv::imencode(".png", to_mat8u(im), buf, params))
    throw Error("png encode failed");
  return buf;
}

inline Image decode_png(const std::vector<unsigned char>& bytes) {
  const cv::Mat m = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw SchemaError("png decode failed");
  return from_mat8u(m);
}

/// Lossy JPEG compress-decompress cycle at the given quality (1..100).
/// Introduces realistic block/ringing artifacts for augmentation.
inline Image jpeg_roundtrip(const Image& im, int quality) {
  if (quality < 1 || quality > 100)
    throw InvalidInputError("jpeg quality must be in [1, 100]");
  std::vector<unsigned char> buf;
  const std::vector<int> params{cv::IMWRITE_JPEG_QUALITY, quality};
  if (!cv::imencode(".jpg", to_mat8u(im), buf, params))
    throw Error("jpeg encode failed");
  const cv::Mat m = cv::imdecode(buf, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw Error("jpeg decode failed");
  return from_mat8u(m);
}

inline void write_bytes(const std::filesystem::path& p,
                        const void* data, std::size_t n) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + p.string());
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!f) throw Error("write failed: " + p.string());
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  write_bytes(p, s.data(), s.size());
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw MissingFileError("file not found: " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline std::string read_text(const std::filesystem::path& p) {
  const auto b = read_bytes(p);
  return {b.begin(), b.end()};
}

}  // namespace lensalign
