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

#ifndef ACNV_LAYERS_HPP_
#define ACNV_LAYERS_HPP_

#include <string>
#include <utility>
#include <vector>

#include "acnv/ops.hpp"

namespace acnv {

template <typename Scalar>
struct NamedParameter {
  std::string name;
  Tensor<Scalar> tensor;
  // Fan-in for weight tensors; zero marks a constant-initialized tensor.
  Index fan_in = 0;
  Scalar fill = Scalar(0);
};

/// Named views of every learnable tensor and normalization state in a
/// network, in a stable order. Used by the initializer, the optimizer and
/// the checkpoint.
template <typename Scalar>
struct ParameterSet {
  std::vector<NamedParameter<Scalar>> tensors;
  std::vector<std::pair<std::string, BatchNormState<Scalar>*>> norms;

  void add_weight(std::string name, Tensor<Scalar> t, Index fan_in) {
    tensors.push_back({std::move(name), std::move(t), fan_in, Scalar(0)});
  }
  void add_constant(std::string name, Tensor<Scalar> t, Scalar fill) {
    tensors.push_back({std::move(name), std::move(t), 0, fill});
  }
  void add_norm(std::string name, BatchNormState<Scalar>* s) { norms.emplace_back(std::move(name), s); }
  void zero_grad() {
    for (auto& p : tensors) p.tensor.zero_grad();
  }
  Index count() const {
    Index n = 0;
    for (const auto& p : tensors) n += p.tensor.size();
    return n;
  }
};

/// conv (no bias) -> batchnorm -> relu.
template <typename Scalar>
Tensor<Scalar> conv_bn_relu(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                            const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                            BatchNormState<Scalar>& state, const Conv2dOptions& options, Mode mode);

template <typename Scalar>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(Index in_channels, Index out_channels, Index kernel_h, Index kernel_w,
             Conv2dOptions options);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Mode mode);

  Index in_channels() const { return weight_.dim(1); }
  Index out_channels() const { return weight_.dim(0); }
  Index fan_in() const { return weight_.dim(1) * weight_.dim(2) * weight_.dim(3); }
  Tensor<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& gamma() { return gamma_; }
  Tensor<Scalar>& beta() { return beta_; }
  BatchNormState<Scalar>& norm() { return norm_; }
  const Conv2dOptions& options() const { return options_; }

  void collect(ParameterSet<Scalar>& set, const std::string& prefix);

 private:
  Tensor<Scalar> weight_;
  Tensor<Scalar> gamma_;
  Tensor<Scalar> beta_;
  BatchNormState<Scalar> norm_;
  Conv2dOptions options_;
};

struct DenseBlockConfig {
  Index num_layers = 4;
  Index growth_rate = 18;
  Index kernel = 3;

  Index output_channels(Index input_channels) const {
    return input_channels + num_layers * growth_rate;
  }
};

/// Densely connected block: layer i sees the channel concatenation of the
/// block input and every earlier layer output, and adds growth_rate channels.
template <typename Scalar>
class DenseBlock {
 public:
  DenseBlock() = default;
  DenseBlock(Index input_channels, DenseBlockConfig config);

  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Mode mode);

  Index input_channels() const { return input_channels_; }
  Index output_channels() const { return config_.output_channels(input_channels_); }
  std::vector<ConvBnRelu<Scalar>>& layers() { return layers_; }
  void collect(ParameterSet<Scalar>& set, const std::string& prefix);

 private:
  Index input_channels_ = 0;
  DenseBlockConfig config_;
  std::vector<ConvBnRelu<Scalar>> layers_;
};

struct AttentionModuleConfig {
  Index pool_stages = 3;
  Index feature_branch_layers = 1;
  bool skip_connections = true;
};

template <typename Scalar>
struct AttentionOutput {
  Tensor<Scalar> output;     // (1 + A) * F
  Tensor<Scalar> attention;  // A, in (0, 1)
  Tensor<Scalar> feature;    // F
};

/// Residual attention transition module.
///
/// The feature branch is `feature_branch_layers` conv-bn-relu units with the
/// channel count preserved. The mask branch goes down through `pool_stages`
/// of (max-pool 2x2/2, conv-bn-relu), comes back up through the same number
/// of (conv-bn-relu, bilinear upsample) steps with additive skips at each
/// intermediate resolution, and ends in a 1x1 conv and a sigmoid. With the module ablated A is identically zero.
template <typename Scalar>
class ResidualAttention {
 public:
  ResidualAttention() = default;
  ResidualAttention(Index channels, AttentionModuleConfig config);

  AttentionOutput<Scalar> operator()(const Tensor<Scalar>& x, Mode mode);

  void set_ablated(bool ablated) { ablated_ = ablated; }
  bool ablated() const { return ablated_; }
  const AttentionModuleConfig& config() const { return config_; }
  Index channels() const { return channels_; }

  std::vector<ConvBnRelu<Scalar>>& feature_branch() { return feature_; }
  std::vector<ConvBnRelu<Scalar>>& down_path() { return down_; }
  std::vector<ConvBnRelu<Scalar>>& up_path() { return up_; }
  Tensor<Scalar>& mask_weight() { return mask_weight_; }
  Tensor<Scalar>& mask_bias() { return mask_bias_; }
  void collect(ParameterSet<Scalar>& set, const std::string& prefix);

 private:
  Tensor<Scalar> attention_branch(const Tensor<Scalar>& x, Mode mode);

  Index channels_ = 0;
  AttentionModuleConfig config_;
  bool ablated_ = false;
  std::vector<ConvBnRelu<Scalar>> feature_;
  std::vector<ConvBnRelu<Scalar>> down_;
  std::vector<ConvBnRelu<Scalar>> up_;
  Tensor<Scalar> mask_weight_;
  Tensor<Scalar> mask_bias_;
};

extern template class ConvBnRelu<float>;
extern template class ConvBnRelu<double>;
extern template class DenseBlock<float>;
extern template class DenseBlock<double>;
extern template class ResidualAttention<float>;
extern template class ResidualAttention<double>;

}  // namespace acnv

#endif  // ACNV_LAYERS_HPP_
