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

#ifndef ACNV_LABELS_HPP_
#define ACNV_LABELS_HPP_

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace acnv {

// Class layout: '0'..'9' -> 0..9, 'a'..'z' -> 10..35 (case-folded), blank last.
inline constexpr int kNumSymbols = 36;
inline constexpr int kBlank = 36;
inline constexpr int kNumClasses = 37;

/// Class index of an alphanumeric character, or nullopt.
std::optional<int> symbol_index(char c);
char symbol_char(int index);
bool is_alphanumeric(std::string_view text);

/// Word over the symbol alphabet; never contains the blank.
class LabelSequence {
 public:
  LabelSequence() = default;
  explicit LabelSequence(std::vector<int> symbols) : symbols_(std::move(symbols)) {}

  /// Case-folds; throws std::invalid_argument on any non-alphanumeric.
  static LabelSequence from_string(std::string_view text);

  const std::vector<int>& symbols() const { return symbols_; }
  size_t size() const { return symbols_.size(); }
  bool empty() const { return symbols_.empty(); }
  int operator[](size_t i) const { return symbols_[i]; }

  /// Renders symbols 0..35 as characters; anything else as '?'.
  std::string to_string() const;

  auto operator<=>(const LabelSequence&) const = default;
  bool operator==(const LabelSequence&) const = default;

 private:
  std::vector<int> symbols_;
};

}  // namespace acnv

#endif  // ACNV_LABELS_HPP_
