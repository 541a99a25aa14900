/* Copyright 2026 The ACNV Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ACNV_IMAGE_HPP_
#define ACNV_IMAGE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace acnv {

/// 8-bit grayscale raster, row-major.
struct GrayImage {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(Eigen::Index h, Eigen::Index w, std::uint8_t fill = 0)
      : height(h), width(w), pixels(size_t(h * w), fill) {}

  std::uint8_t& operator()(Eigen::Index y, Eigen::Index x) { return pixels[size_t(y * width + x)]; }
  std::uint8_t operator()(Eigen::Index y, Eigen::Index x) const {
    return pixels[size_t(y * width + x)];
  }
  bool operator==(const GrayImage&) const = default;
};

/// Row-major float raster used while compositing.
using FloatImage = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Separable resampling: area averaging along axes that shrink, half-pixel
/// bilinear along axes that grow.
FloatImage resize(const FloatImage& src, Eigen::Index out_h, Eigen::Index out_w);
GrayImage resize(const GrayImage& src, Eigen::Index out_h, Eigen::Index out_w);

FloatImage to_float(const GrayImage& image);
/// Rounds and clamps to [0, 255].
GrayImage to_gray(const FloatImage& image);

/// Reads binary (P5) or ASCII (P2) portable graymaps; deeper maxvals are
/// rescaled to 8 bits.
GrayImage read_pgm(const std::string& path);
/// Writes a binary (P5) portable graymap.
void write_pgm(const std::string& path, const GrayImage& image);
std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::string& bytes, const std::string& source = "<memory>");

}  // namespace acnv

#endif  // ACNV_IMAGE_HPP_
