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

#include "acnv/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace acnv {

namespace {

namespace fs = std::filesystem;

// 5x7 bitmaps for '0'..'9' then 'A'..'Z'.
constexpr std::array<Glyph, kNumSymbols> kAtlas{{
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
    {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11},  // A
    {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},  // B
    {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E},  // C
    {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},  // D
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F},  // E
    {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},  // F
    {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F},  // G
    {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // H
    {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},  // I
    {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},  // J
    {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // K
    {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},  // L
    {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11},  // M
    {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},  // N
    {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // O
    {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},  // P
    {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D},  // Q
    {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},  // R
    {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E},  // S
    {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // T
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // U
    {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},  // V
    {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A},  // W
    {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},  // X
    {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04},  // Y
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},  // Z
}};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Adds the area of [x0, x1) x [y0, y1) covered inside each pixel.
void fill_coverage(FloatImage& mask, double x0, double y0, double x1, double y1) {
  const Index px0 = std::max<Index>(0, Index(std::floor(x0)));
  const Index px1 = std::min<Index>(mask.cols(), Index(std::ceil(x1)));
  const Index py0 = std::max<Index>(0, Index(std::floor(y0)));
  const Index py1 = std::min<Index>(mask.rows(), Index(std::ceil(y1)));
  for (Index y = py0; y < py1; ++y) {
    const double oy = std::min(y1, double(y + 1)) - std::max(y0, double(y));
    if (oy <= 0) continue;
    for (Index x = px0; x < px1; ++x) {
      const double ox = std::min(x1, double(x + 1)) - std::max(x0, double(x));
      if (ox > 0) mask(y, x) += float(ox * oy);
    }
  }
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<LabelSequence> parse_word_list(const std::string& csv) {
  std::vector<LabelSequence> words;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) words.push_back(LabelSequence::from_string(item));
  }
  return words;
}

std::vector<LabelSequence> read_word_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read words file " + path);
  std::vector<LabelSequence> words;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!is_alphanumeric(line)) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": non-alphanumeric word '" + line + "'");
    }
    words.push_back(LabelSequence::from_string(line));
  }
  return words;
}

}  // namespace

const Glyph& glyph(int symbol) {
  if (symbol < 0 || symbol >= kNumSymbols) {
    throw std::out_of_range("glyph: symbol " + std::to_string(symbol) + " outside the alphabet");
  }
  return kAtlas[size_t(symbol)];
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

Sample render(const LabelSequence& label, std::uint64_t seed, const NoiseSpec& noise) {
  if (label.empty() || Index(label.size()) > kMaxLabelLength) {
    throw std::invalid_argument("render: label length " + std::to_string(label.size()) +
                                " outside [1, " + std::to_string(kMaxLabelLength) + "]");
  }
  std::mt19937_64 rng(seed);
  RenderMeta meta;
  meta.seed = seed;
  meta.noise = noise;
  meta.glyph_scale_y = uniform(rng, 2.6, 3.6);
  meta.glyph_scale_x = uniform(rng, 2.2, 3.4);
  meta.background = uniform(rng, 15.0, 70.0);
  meta.foreground = uniform(rng, 170.0, 245.0);
  meta.gradient_angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double sx = meta.glyph_scale_x, sy = meta.glyph_scale_y;

  // Horizontal layout: margins, glyph advances and jittered gaps.
  const double left = uniform(rng, 1.0, 6.0);
  std::vector<double> gaps(label.size());
  for (auto& g : gaps) g = uniform(rng, 0.5, 1.8) * sx;
  const double right = uniform(rng, 1.0, 6.0);
  double width = left + right;
  for (size_t i = 0; i < label.size(); ++i) width += kGlyphCols * sx + (i + 1 < label.size() ? gaps[i] : 0.0);

  const double glyph_h = kGlyphRows * sy;
  const double slack = double(kImageHeight) - glyph_h;
  const double top = std::clamp(slack / 2 + uniform(rng, -2.0, 2.0), 0.5, slack - 0.5);

  FloatImage mask = FloatImage::Zero(kImageHeight, Index(std::ceil(width)));
  double x = left;
  for (size_t i = 0; i < label.size(); ++i) {
    const double y = std::clamp(top + uniform(rng, -1.0, 1.0), 0.0, slack);
    const Glyph& g = glyph(label[i]);
    for (int r = 0; r < kGlyphRows; ++r) {
      for (int c = 0; c < kGlyphCols; ++c) {
        if (g[size_t(r)] & (1u << (kGlyphCols - 1 - c))) {
          fill_coverage(mask, x + c * sx, y + r * sy, x + (c + 1) * sx, y + (r + 1) * sy);
        }
      }
    }
    x += kGlyphCols * sx + gaps[i];
  }
  mask = mask.min(1.0f);
  FloatImage text = resize(mask, kImageHeight, kImageWidth);

  FloatImage image = float(meta.background) + float(meta.foreground - meta.background) * text;
  if (noise.enabled) {
    if (noise.gradient > 0) {
      const double c = std::cos(meta.gradient_angle), s = std::sin(meta.gradient_angle);
      const double extent = 0.5 * (std::abs(c) + std::abs(s));
      for (Index yy = 0; yy < kImageHeight; ++yy) {
        for (Index xx = 0; xx < kImageWidth; ++xx) {
          const double u = (xx + 0.5) / kImageWidth - 0.5, v = (yy + 0.5) / kImageHeight - 0.5;
          const double ramp = 0.5 * (u * c + v * s) / extent;  // in [-0.5, 0.5]
          image(yy, xx) += float(noise.gradient * 255.0 * ramp);
        }
      }
    }
    if (noise.salt_pepper > 0) {
      std::bernoulli_distribution hit(noise.salt_pepper), white(0.5);
      for (Index i = 0; i < image.size(); ++i) {
        if (hit(rng)) image.data()[i] = white(rng) ? 255.0f : 0.0f;
      }
    }
  }
  return Sample{to_gray(image), label, meta};
}

VocabMode parse_vocab_mode(const std::string& name) {
  if (name == "digits") return VocabMode::kDigits;
  if (name == "alnum") return VocabMode::kAlphanumeric;
  if (name == "words") return VocabMode::kWords;
  throw std::invalid_argument("unknown vocab mode '" + name + "' (expected digits, alnum or words)");
}

std::string to_string(VocabMode mode) {
  switch (mode) {
    case VocabMode::kDigits: return "digits";
    case VocabMode::kAlphanumeric: return "alnum";
    case VocabMode::kWords: return "words";
  }
  return "?";
}

void VocabSpec::validate() const {
  if (mode == VocabMode::kWords) {
    if (words.empty()) throw std::invalid_argument("vocab: word list is empty");
    for (const auto& w : words) {
      if (w.empty() || Index(w.size()) > kMaxLabelLength) {
        throw std::invalid_argument("vocab: word '" + w.to_string() + "' length outside [1, " +
                                    std::to_string(kMaxLabelLength) + "]");
      }
    }
    return;
  }
  if (min_length < 1 || max_length < min_length || max_length > kMaxLabelLength) {
    throw std::invalid_argument("vocab: length range [" + std::to_string(min_length) + ", " +
                                std::to_string(max_length) + "] is empty or outside [1, " +
                                std::to_string(kMaxLabelLength) + "]");
  }
}

DatasetSpec DatasetSpec::from_config(const KeyValues& kv) {
  kv.require_known({"vocab", "words", "words_file", "min_length", "max_length", "count", "seed",
                    "noise", "salt_pepper", "gradient"});
  DatasetSpec spec;
  spec.vocab.mode = parse_vocab_mode(kv.get_string("vocab", "digits"));
  spec.vocab.min_length = kv.get_int("min_length", spec.vocab.min_length);
  spec.vocab.max_length = kv.get_int("max_length", spec.vocab.max_length);
  if (kv.contains("words")) spec.vocab.words = parse_word_list(kv.get_string("words", ""));
  if (kv.contains("words_file")) {
    auto more = read_word_file(kv.get_string("words_file", ""));
    spec.vocab.words.insert(spec.vocab.words.end(), more.begin(), more.end());
  }
  spec.count = kv.get_int("count", spec.count);
  spec.seed = kv.get_uint("seed", spec.seed);
  if (auto s = seed_override()) spec.seed = *s;
  spec.noise.enabled = kv.get_bool("noise", spec.noise.enabled);
  spec.noise.salt_pepper = kv.get_double("salt_pepper", spec.noise.salt_pepper);
  spec.noise.gradient = kv.get_double("gradient", spec.noise.gradient);
  if (spec.count < 1) throw std::invalid_argument("count must be >= 1");
  if (spec.noise.salt_pepper < 0 || spec.noise.salt_pepper > 1 || spec.noise.gradient < 0) {
    throw std::invalid_argument("noise parameters out of range");
  }
  spec.vocab.validate();
  return spec;
}

DatasetSpec DatasetSpec::load(const std::string& path) { return from_config(KeyValues::load(path)); }

KeyValues DatasetSpec::to_config() const {
  KeyValues kv;
  kv.set("vocab", to_string(vocab.mode));
  kv.set("min_length", std::to_string(vocab.min_length));
  kv.set("max_length", std::to_string(vocab.max_length));
  if (!vocab.words.empty()) {
    std::string joined;
    for (const auto& w : vocab.words) joined += (joined.empty() ? "" : ",") + w.to_string();
    kv.set("words", joined);
  }
  kv.set("count", std::to_string(count));
  kv.set("seed", std::to_string(seed));
  kv.set("noise", noise.enabled ? "true" : "false");
  kv.set("salt_pepper", format_double(noise.salt_pepper));
  kv.set("gradient", format_double(noise.gradient));
  return kv;
}

SyntheticDataset::SyntheticDataset(DatasetSpec spec) : spec_(std::move(spec)) {
  if (spec_.count < 1) throw std::invalid_argument("dataset: count must be >= 1");
  spec_.vocab.validate();
}

LabelSequence SyntheticDataset::label(Index i) const {
  if (i < 0 || i >= spec_.count) throw std::out_of_range("dataset: index out of range");
  std::mt19937_64 rng(mix_seed(spec_.seed, std::uint64_t(i), 0));
  const VocabSpec& v = spec_.vocab;
  if (v.mode == VocabMode::kWords) {
    std::uniform_int_distribution<size_t> pick(0, v.words.size() - 1);
    return v.words[pick(rng)];
  }
  std::uniform_int_distribution<Index> length(v.min_length, v.max_length);
  std::uniform_int_distribution<int> symbol(0, v.mode == VocabMode::kDigits ? 9 : kNumSymbols - 1);
  std::vector<int> symbols(size_t(length(rng)));
  for (auto& s : symbols) s = symbol(rng);
  return LabelSequence(std::move(symbols));
}

Sample SyntheticDataset::sample(Index i) const {
  return render(label(i), mix_seed(spec_.seed, std::uint64_t(i), 1), spec_.noise);
}

std::vector<Sample> make_dataset(const VocabSpec& vocab, Index count, std::uint64_t seed,
                                 const NoiseSpec& noise) {
  SyntheticDataset ds(DatasetSpec{vocab, count, seed, noise});
  std::vector<Sample> out;
  out.reserve(size_t(count));
  for (Index i = 0; i < count; ++i) out.push_back(ds.sample(i));
  return out;
}

bool evaluation_filter(const LabelSequence& label) {
  if (label.size() < 3) return false;
  return std::all_of(label.symbols().begin(), label.symbols().end(),
                     [](int s) { return s >= 0 && s < kNumSymbols; });
}

bool evaluation_filter(std::string_view text) { return text.size() >= 3 && is_alphanumeric(text); }

LoadReport load_directory(const std::string& directory, const std::string& labels_file) {
  fs::path labels_path(labels_file);
  if (labels_path.is_relative() && !fs::exists(labels_path)) labels_path = fs::path(directory) / labels_path;
  std::ifstream in(labels_path);
  if (!in) throw std::runtime_error("cannot read labels file " + labels_path.string());

  LoadReport report;
  std::string line;
  int line_no = 0;
  auto skip = [&](const std::string& why) {
    ++report.skipped;
    report.messages.push_back(labels_path.string() + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      skip("expected filename<TAB>label");
      continue;
    }
    const std::string file = line.substr(0, tab);
    const std::string text = line.substr(tab + 1);
    if (text.empty() || !is_alphanumeric(text)) {
      skip("label '" + text + "' is not alphanumeric");
      continue;
    }
    if (Index(text.size()) > kMaxLabelLength) {
      skip("label '" + text + "' longer than " + std::to_string(kMaxLabelLength));
      continue;
    }
    try {
      GrayImage image = read_pgm((fs::path(directory) / file).string());
      Sample s;
      s.image = resize(image, kImageHeight, kImageWidth);
      s.label = LabelSequence::from_string(text);
      report.samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      skip(e.what());
    }
  }
  return report;
}

std::string write_directory(const std::string& directory, const std::vector<Sample>& samples) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw std::runtime_error("cannot create directory " + directory + ": " + ec.message());
  const fs::path labels_path = fs::path(directory) / "labels.txt";
  std::ofstream labels(labels_path, std::ios::trunc);
  if (!labels) throw std::runtime_error("cannot write " + labels_path.string());
  char name[32];
  for (size_t i = 0; i < samples.size(); ++i) {
    std::snprintf(name, sizeof(name), "%06zu.pgm", i);
    write_pgm((fs::path(directory) / name).string(), samples[i].image);
    labels << name << '\t' << samples[i].label.to_string() << '\n';
  }
  if (!labels) throw std::runtime_error("failed writing " + labels_path.string());
  return labels_path.string();
}

template <typename Scalar>
Tensor<Scalar> to_tensor(const std::vector<const GrayImage*>& images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: empty batch");
  const Index h = images.front()->height, w = images.front()->width;
  Tensor<Scalar> out({Index(images.size()), 1, h, w});
  Scalar* dst = out.data();
  for (const GrayImage* img : images) {
    if (img->height != h || img->width != w) {
      throw std::invalid_argument("to_tensor: mixed image sizes in one batch");
    }
    for (std::uint8_t p : img->pixels) *dst++ = Scalar(p) / Scalar(127.5) - Scalar(1);
  }
  return out;
}

std::uint64_t image_hash(const GrayImage& image) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  auto feed = [&](std::uint8_t byte) {
    h ^= byte;
    h *= 0x100000001B3ull;
  };
  for (int i = 0; i < 8; ++i) feed(std::uint8_t(std::uint64_t(image.height) >> (8 * i)));
  for (int i = 0; i < 8; ++i) feed(std::uint8_t(std::uint64_t(image.width) >> (8 * i)));
  for (std::uint8_t p : image.pixels) feed(p);
  return h;
}

template Tensor<float> to_tensor(const std::vector<const GrayImage*>&);
template Tensor<double> to_tensor(const std::vector<const GrayImage*>&);

}  // namespace acnv
