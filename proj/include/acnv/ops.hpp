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

// Differentiable primitives over 4-d (B, C, H, W) and 2-d (N, K) tensors.
//
// Every function validates shapes and throws std::invalid_argument with the
// offending shapes in the message. Padding is always explicit.

#ifndef ACNV_OPS_HPP_
#define ACNV_OPS_HPP_

#include <cstdint>
#include <vector>

#include "acnv/tensor.hpp"

namespace acnv {

struct Padding2d {
  Index top = 0;
  Index bottom = 0;
  Index left = 0;
  Index right = 0;

  static Padding2d uniform(Index p) { return {p, p, p, p}; }
  bool operator==(const Padding2d&) const = default;
};

struct Conv2dOptions {
  Index stride_h = 1;
  Index stride_w = 1;
  Padding2d padding;
};

/// 2-d cross-correlation. `bias` may be undefined for bias-free convolution.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const Conv2dOptions& options = {});

enum class PoolKind { kMax, kAverage };

struct Pool2dOptions {
  Index kernel_h = 2;
  Index kernel_w = 2;
  Index stride_h = 2;
  Index stride_w = 2;
  Padding2d padding;
};

/// Max pooling ignores padded cells; average pooling counts them as zeros and
/// always divides by the full window area. Max routes the gradient to the
/// first maximum in row-major window order.
template <typename Scalar>
Tensor<Scalar> pool2d(const Tensor<Scalar>& input, PoolKind kind, const Pool2dOptions& options);

/// Corner-aligned bilinear resize to a size at least as large as the input.
template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& input, Index out_h, Index out_w);

enum class Mode { kTrain, kInfer };

/// Per-channel running statistics carried by a batch normalization layer.
template <typename Scalar>
struct BatchNormState {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BatchNormState() = default;
  explicit BatchNormState(Index channels)
      : running_mean(Array::Zero(channels)), running_var(Array::Ones(channels)) {}

  Array running_mean;
  Array running_var;
  // Number of training batches folded into the running statistics.
  std::int64_t batches_tracked = 0;
  double momentum = 0.9;
  double epsilon = 1e-5;

  bool initialized() const { return batches_tracked > 0; }
};

/// Train mode normalizes with batch statistics (biased variance) and folds
/// them into `state` as running = momentum * running + (1 - momentum) * batch,
/// using the unbiased variance for the running estimate.
template <typename Scalar>
Tensor<Scalar> batchnorm(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma,
                         const Tensor<Scalar>& beta, BatchNormState<Scalar>& state, Mode mode);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> multiply(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Elementwise a * s.
template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s);

/// Sum of all elements as a scalar tensor of shape [1].
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a);

/// Concatenation of 4-d tensors along the channel axis.
template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& parts);

/// Softmax over the last axis of a 2-d tensor.
template <typename Scalar>
Tensor<Scalar> row_softmax(const Tensor<Scalar>& x);

/// x[N, D] * weight[D, K] + bias[K].
template <typename Scalar>
Tensor<Scalar> matmul_affine(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                             const Tensor<Scalar>& bias);

/// Same values under a new shape with identical element count.
template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape);

/// [B, C, H, W] -> [B, W, C*H]; frame t holds column t of every channel,
/// channel-major.
template <typename Scalar>
Tensor<Scalar> columns_to_frames(const Tensor<Scalar>& maps);

/// [B, W, D] -> [B, 1, D, W]; column t of the map is frame t.
template <typename Scalar>
Tensor<Scalar> frames_to_columns(const Tensor<Scalar>& frames);

}  // namespace acnv

#endif  // ACNV_OPS_HPP_
