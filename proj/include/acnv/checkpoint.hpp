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

// Binary checkpoint, little-endian throughout:
//
//   "ACNV" | u32 version | u64 step
//   u32 length | architecture descriptor text
//   u32 count | tensor records
//   u8 has_optimizer [| i64 steps | f64 lr, beta1, beta2, epsilon
//                     | u32 count | tensor records]
//
// A tensor record is u32 name length | name | u8 dtype | u32 ndim |
// u64 dims[ndim] | raw values.

#ifndef ACNV_CHECKPOINT_HPP_
#define ACNV_CHECKPOINT_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acnv/model.hpp"
#include "acnv/optim.hpp"

namespace acnv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1, kInt64 = 2 };

/// Values are held as doubles, which represent every float32 and every
/// int64 below 2^53 exactly, so records re-encode to identical bytes.
struct TensorRecord {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<double> values;

  bool operator==(const TensorRecord&) const = default;
};

struct OptimizerRecord {
  std::int64_t steps = 0;
  AdamOptions options;
  std::vector<TensorRecord> moments;  // "<param>.m" and "<param>.v", in parameter order
};

struct Checkpoint {
  std::uint64_t step = 0;
  ArchitectureDescriptor architecture;
  std::vector<TensorRecord> tensors;
  std::optional<OptimizerRecord> optimizer;

  std::string encode() const;
  static Checkpoint decode(const std::string& bytes, const std::string& source = "<memory>");

  /// Writes to a sibling temporary file, then renames over `path`.
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  const TensorRecord* find(const std::string& name) const;
};

/// Snapshot of parameters, normalization statistics and, when given, the
/// optimizer.
template <typename Scalar>
Checkpoint capture(AttentionConvNet<Scalar>& net, std::uint64_t step,
                   const Adam<Scalar>* optimizer = nullptr);

/// Copies every recorded tensor into `net` (and `optimizer`). The
/// architecture must match and no parameter may be missing.
template <typename Scalar>
void restore(const Checkpoint& checkpoint, AttentionConvNet<Scalar>& net,
             Adam<Scalar>* optimizer = nullptr);

}  // namespace acnv

#endif  // ACNV_CHECKPOINT_HPP_
