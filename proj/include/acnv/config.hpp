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

// Flat key=value text: one pair per line, '#' starts a comment, blank lines
// are ignored, later keys override earlier ones.

#ifndef ACNV_CONFIG_HPP_
#define ACNV_CONFIG_HPP_

#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace acnv {

class KeyValues {
 public:
  static KeyValues parse(std::string_view text, std::string_view source = "<text>");
  static KeyValues load(const std::string& path);

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Throws naming the first key outside `allowed`.
  void require_known(std::initializer_list<std::string_view> allowed) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         std::vector<std::int64_t> fallback) const;

  std::string serialize() const;

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

/// Shortest text that reads back to the same double.
std::string format_double(double v);

/// Seed override from the ACNV_SEED environment variable, if set.
std::optional<std::uint64_t> seed_override();

}  // namespace acnv

#endif  // ACNV_CONFIG_HPP_
