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

// Initialization, gradient clipping and the Adam update.

#ifndef ACNV_OPTIM_HPP_
#define ACNV_OPTIM_HPP_

#include <cstdint>
#include <vector>

#include "acnv/layers.hpp"

namespace acnv {

/// Zero-mean normal draws with standard deviation sqrt(2 / fan_in).
template <typename Scalar>
Tensor<Scalar> init_msra(const Shape& shape, Index fan_in, std::uint64_t seed);

/// Re-initializes every tensor of `params` from one seeded stream, in set
/// order: weights by init_msra, constants to their fill. Normalization
/// statistics are reset.
template <typename Scalar>
void initialize(ParameterSet<Scalar>& params, std::uint64_t seed);

/// Global L2 norm over every populated gradient. Throws naming the first
/// parameter holding a non-finite gradient.
template <typename Scalar>
double gradient_norm(const ParameterSet<Scalar>& params);

/// Scales all gradients uniformly so their global L2 norm is at most
/// `threshold`; returns the factor applied (1 when already within).
template <typename Scalar>
double clip_gradients(ParameterSet<Scalar>& params, double threshold = 5.0);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamMoments {
  using Array = typename Tensor<Scalar>::Array;
  Array first;
  Array second;
};

/// One bias-corrected Adam update of `value` in place; `step` counts from 1.
template <typename Scalar>
void adam_update(typename Tensor<Scalar>::Array& value, const typename Tensor<Scalar>::Array& grad,
                 AdamMoments<Scalar>& moments, std::int64_t step, const AdamOptions& options);

template <typename Scalar>
class Adam {
 public:
  Adam(ParameterSet<Scalar> params, AdamOptions options = {});

  /// Applies one update from the current gradients; tensors without a
  /// gradient see a zero gradient.
  void step();

  std::int64_t steps() const { return steps_; }
  const AdamOptions& options() const { return options_; }
  AdamOptions& options() { return options_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  std::vector<AdamMoments<Scalar>>& moments() { return moments_; }
  const std::vector<AdamMoments<Scalar>>& moments() const { return moments_; }

  /// Used when resuming; moment shapes must match the parameters.
  void restore(std::int64_t steps, std::vector<AdamMoments<Scalar>> moments);

 private:
  ParameterSet<Scalar> params_;
  AdamOptions options_;
  std::vector<AdamMoments<Scalar>> moments_;
  std::int64_t steps_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace acnv

#endif  // ACNV_OPTIM_HPP_
