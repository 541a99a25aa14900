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

#include "acnv/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace acnv {

namespace {

using Index = Eigen::Index;

struct Tap {
  Index index;
  float weight;
};

// Contribution of source cells to each output cell along one axis.
std::vector<std::vector<Tap>> axis_weights(Index in, Index out) {
  std::vector<std::vector<Tap>> taps(out);
  const double scale = double(in) / double(out);
  for (Index o = 0; o < out; ++o) {
    if (scale >= 1.0) {
      const double lo = o * scale, hi = (o + 1) * scale;
      for (Index i = Index(std::floor(lo)); i < std::min<Index>(in, Index(std::ceil(hi))); ++i) {
        const double overlap = std::min(hi, double(i + 1)) - std::max(lo, double(i));
        if (overlap > 0) taps[o].push_back({i, float(overlap / scale)});
      }
    } else {
      double src = (o + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, double(in - 1));
      const Index i0 = Index(std::floor(src));
      const Index i1 = std::min(i0 + 1, in - 1);
      const float f = float(src - double(i0));
      taps[o].push_back({i0, 1.0f - f});
      if (i1 != i0) taps[o].push_back({i1, f});
    }
  }
  return taps;
}

// Skips whitespace and '#' comments in a PGM header.
void skip_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

long read_header_int(std::istream& in, const std::string& source) {
  skip_space(in);
  long v = -1;
  if (!(in >> v) || v < 0) throw std::runtime_error(source + ": malformed PGM header");
  return v;
}

}  // namespace

FloatImage resize(const FloatImage& src, Index out_h, Index out_w) {
  if (src.rows() == 0 || src.cols() == 0 || out_h <= 0 || out_w <= 0) {
    throw std::invalid_argument("resize: empty image");
  }
  const auto cols = axis_weights(src.cols(), out_w);
  const auto rows = axis_weights(src.rows(), out_h);
  FloatImage tmp = FloatImage::Zero(src.rows(), out_w);
  for (Index x = 0; x < out_w; ++x) {
    for (const Tap& t : cols[x]) tmp.col(x) += src.col(t.index) * t.weight;
  }
  FloatImage out = FloatImage::Zero(out_h, out_w);
  for (Index y = 0; y < out_h; ++y) {
    for (const Tap& t : rows[y]) out.row(y) += tmp.row(t.index) * t.weight;
  }
  return out;
}

GrayImage resize(const GrayImage& src, Index out_h, Index out_w) {
  if (src.height == out_h && src.width == out_w) return src;
  return to_gray(resize(to_float(src), out_h, out_w));
}

FloatImage to_float(const GrayImage& image) {
  FloatImage out(image.height, image.width);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = float(image.pixels[size_t(i)]);
  return out;
}

GrayImage to_gray(const FloatImage& image) {
  GrayImage out(image.rows(), image.cols());
  for (Index i = 0; i < image.size(); ++i) {
    out.pixels[size_t(i)] = std::uint8_t(std::clamp(std::lround(image.data()[i]), 0L, 255L));
  }
  return out;
}

GrayImage decode_pgm(const std::string& bytes, const std::string& source) {
  std::istringstream in(bytes);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '2')) {
    throw std::runtime_error(source + ": not a portable graymap");
  }
  const long width = read_header_int(in, source);
  const long height = read_header_int(in, source);
  const long maxval = read_header_int(in, source);
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
    throw std::runtime_error(source + ": unsupported PGM geometry or maxval");
  }
  GrayImage image(height, width);
  const size_t n = size_t(width) * size_t(height);
  auto store = [&](size_t i, long v) {
    if (v > maxval) throw std::runtime_error(source + ": sample exceeds maxval");
    image.pixels[i] = std::uint8_t(maxval == 255 ? v : std::lround(double(v) * 255.0 / double(maxval)));
  };
  if (magic[1] == '2') {
    for (size_t i = 0; i < n; ++i) store(i, read_header_int(in, source));
    return image;
  }
  in.get();  // single whitespace after maxval
  const size_t depth = maxval > 255 ? 2 : 1;
  std::string raster(n * depth, '\0');
  in.read(raster.data(), std::streamsize(raster.size()));
  if (size_t(in.gcount()) != raster.size()) throw std::runtime_error(source + ": truncated raster");
  for (size_t i = 0; i < n; ++i) {
    long v = depth == 1 ? long(std::uint8_t(raster[i]))
                        : (long(std::uint8_t(raster[2 * i])) << 8) | long(std::uint8_t(raster[2 * i + 1]));
    store(i, v);
  }
  return image;
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_pgm(ss.str(), path);
}

std::string encode_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

void write_pgm(const std::string& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::string bytes = encode_pgm(image);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace acnv
