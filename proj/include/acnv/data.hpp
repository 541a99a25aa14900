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

// Synthetic word images rendered from an embedded bitmap font, directory
// loading, and the evaluation filter.

#ifndef ACNV_DATA_HPP_
#define ACNV_DATA_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "acnv/config.hpp"
#include "acnv/image.hpp"
#include "acnv/labels.hpp"
#include "acnv/tensor.hpp"

namespace acnv {

inline constexpr Index kImageHeight = 32;
inline constexpr Index kImageWidth = 100;
inline constexpr Index kMaxLabelLength = 12;

inline constexpr int kGlyphRows = 7;
inline constexpr int kGlyphCols = 5;

/// Row bitmaps, most significant of the low five bits is the leftmost column.
using Glyph = std::array<std::uint8_t, kGlyphRows>;

/// Bitmap for symbol class `symbol` in [0, kNumSymbols).
const Glyph& glyph(int symbol);

struct NoiseSpec {
  bool enabled = true;
  double salt_pepper = 0.02;  // fraction of pixels forced to black or white
  double gradient = 0.15;     // linear background ramp, fraction of dynamic range

  static NoiseSpec off() { return {false, 0.0, 0.0}; }
  bool operator==(const NoiseSpec&) const = default;
};

/// Generator parameters recorded with every sample.
struct RenderMeta {
  std::uint64_t seed = 0;
  NoiseSpec noise;
  double glyph_scale_x = 0;
  double glyph_scale_y = 0;
  double background = 0;
  double foreground = 0;
  double gradient_angle = 0;
};

struct Sample {
  GrayImage image;  // kImageHeight x kImageWidth
  LabelSequence label;
  RenderMeta meta;
};

/// Pure function of (label, seed, noise). Labels longer than kMaxLabelLength
/// or empty are rejected.
Sample render(const LabelSequence& label, std::uint64_t seed, const NoiseSpec& noise = {});

enum class VocabMode { kDigits, kAlphanumeric, kWords };

VocabMode parse_vocab_mode(const std::string& name);
std::string to_string(VocabMode mode);

struct VocabSpec {
  VocabMode mode = VocabMode::kDigits;
  Index min_length = 3;
  Index max_length = 5;
  std::vector<LabelSequence> words;  // used by kWords

  /// Throws when no label can be drawn.
  void validate() const;
};

/// Dataset description in flat key=value form:
///   vocab = digits | alnum | words
///   words = comma-separated list     (vocab = words)
///   words_file = path, one per line  (vocab = words)
///   min_length, max_length, count, seed
///   noise = true | false, salt_pepper, gradient
struct DatasetSpec {
  VocabSpec vocab;
  Index count = 1000;
  std::uint64_t seed = 1;
  NoiseSpec noise;

  static DatasetSpec from_config(const KeyValues& kv);
  static DatasetSpec load(const std::string& path);
  KeyValues to_config() const;
};

/// Random-access synthetic stream; sample i depends only on (spec, i), so
/// shards can be generated independently.
class SyntheticDataset {
 public:
  explicit SyntheticDataset(DatasetSpec spec);

  Index size() const { return spec_.count; }
  const DatasetSpec& spec() const { return spec_; }

  LabelSequence label(Index i) const;
  Sample sample(Index i) const;

 private:
  DatasetSpec spec_;
};

/// Materializes `count` samples drawn from `vocab` with the given seed.
std::vector<Sample> make_dataset(const VocabSpec& vocab, Index count, std::uint64_t seed,
                                 const NoiseSpec& noise = {});

/// Evaluation protocol: at least three symbols, all alphanumeric.
bool evaluation_filter(const LabelSequence& label);
bool evaluation_filter(std::string_view text);

struct LoadReport {
  std::vector<Sample> samples;
  Index skipped = 0;
  std::vector<std::string> messages;  // "labels.txt:4: ..." per skipped line
};

/// Reads "filename<TAB>label" lines; filenames are relative to `directory`.
/// Bad lines and unreadable images are reported and skipped.
LoadReport load_directory(const std::string& directory, const std::string& labels_file);

/// Writes images as 000000.pgm ... plus labels.txt; returns the labels path.
std::string write_directory(const std::string& directory, const std::vector<Sample>& samples);

/// [B, 1, H, W] tensor of pixels mapped to [-1, 1].
template <typename Scalar>
Tensor<Scalar> to_tensor(const std::vector<const GrayImage*>& images);

template <typename Scalar>
Tensor<Scalar> to_tensor(const GrayImage& image) {
  return to_tensor<Scalar>(std::vector<const GrayImage*>{&image});
}

/// 64-bit FNV-1a over geometry and pixels.
std::uint64_t image_hash(const GrayImage& image);

/// Stateless 64-bit mixing used to derive per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace acnv

#endif  // ACNV_DATA_HPP_
