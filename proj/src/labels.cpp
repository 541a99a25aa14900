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

#include "acnv/labels.hpp"

#include <stdexcept>

namespace acnv {

std::optional<int> symbol_index(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'z') return 10 + (c - 'a');
  if (c >= 'A' && c <= 'Z') return 10 + (c - 'A');
  return std::nullopt;
}

char symbol_char(int index) {
  if (index >= 0 && index < 10) return char('0' + index);
  if (index >= 10 && index < kNumSymbols) return char('a' + index - 10);
  return '?';
}

bool is_alphanumeric(std::string_view text) {
  for (char c : text) {
    if (!symbol_index(c)) return false;
  }
  return true;
}

LabelSequence LabelSequence::from_string(std::string_view text) {
  std::vector<int> symbols;
  symbols.reserve(text.size());
  for (char c : text) {
    auto idx = symbol_index(c);
    if (!idx) {
      throw std::invalid_argument("label \"" + std::string(text) +
                                  "\" contains non-alphanumeric character");
    }
    symbols.push_back(*idx);
  }
  return LabelSequence(std::move(symbols));
}

std::string LabelSequence::to_string() const {
  std::string out;
  out.reserve(symbols_.size());
  for (int s : symbols_) out.push_back(symbol_char(s));
  return out;
}

}  // namespace acnv
