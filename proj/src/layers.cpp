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

#include "acnv/layers.hpp"

#include <stdexcept>

namespace acnv {

template <typename Scalar>
Tensor<Scalar> conv_bn_relu(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                            const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                            BatchNormState<Scalar>& state, const Conv2dOptions& options,
                            Mode mode) {
  return relu(batchnorm(conv2d(input, weight, Tensor<Scalar>(), options), gamma, beta, state, mode));
}

template <typename Scalar>
ConvBnRelu<Scalar>::ConvBnRelu(Index in_channels, Index out_channels, Index kernel_h,
                               Index kernel_w, Conv2dOptions options)
    : weight_(Tensor<Scalar>::parameter({out_channels, in_channels, kernel_h, kernel_w})),
      gamma_(Tensor<Scalar>::parameter({out_channels}, Scalar(1))),
      beta_(Tensor<Scalar>::parameter({out_channels}, Scalar(0))),
      norm_(out_channels),
      options_(options) {}

template <typename Scalar>
Tensor<Scalar> ConvBnRelu<Scalar>::operator()(const Tensor<Scalar>& x, Mode mode) {
  return conv_bn_relu(x, weight_, gamma_, beta_, norm_, options_, mode);
}

template <typename Scalar>
void ConvBnRelu<Scalar>::collect(ParameterSet<Scalar>& set, const std::string& prefix) {
  set.add_weight(prefix + ".weight", weight_, fan_in());
  set.add_constant(prefix + ".gamma", gamma_, Scalar(1));
  set.add_constant(prefix + ".beta", beta_, Scalar(0));
  set.add_norm(prefix + ".bn", &norm_);
}

template <typename Scalar>
DenseBlock<Scalar>::DenseBlock(Index input_channels, DenseBlockConfig config)
    : input_channels_(input_channels), config_(config) {
  const Index pad = config.kernel / 2;
  for (Index i = 0; i < config.num_layers; ++i) {
    layers_.emplace_back(input_channels + i * config.growth_rate, config.growth_rate,
                         config.kernel, config.kernel,
                         Conv2dOptions{1, 1, Padding2d::uniform(pad)});
  }
}

template <typename Scalar>
Tensor<Scalar> DenseBlock<Scalar>::operator()(const Tensor<Scalar>& x, Mode mode) {
  if (x.ndim() != 4 || x.dim(1) != input_channels_) {
    throw std::invalid_argument("dense_block: expected " + std::to_string(input_channels_) +
                                " input channels, got " + to_string(x.shape()));
  }
  std::vector<Tensor<Scalar>> features{x};
  Tensor<Scalar> current = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = layers_[i];
    const Index expected_in = input_channels_ + Index(i) * config_.growth_rate;
    if (layer.in_channels() != expected_in || layer.out_channels() != config_.growth_rate) {
      throw std::invalid_argument("dense_block: layer " + std::to_string(i) + " weight " +
                                  to_string(layer.weight().shape()) + " inconsistent with " +
                                  std::to_string(expected_in) + " -> " +
                                  std::to_string(config_.growth_rate) + " connectivity");
    }
    features.push_back(layer(current, mode));
    current = concat_channels(features);
  }
  return current;
}

template <typename Scalar>
void DenseBlock<Scalar>::collect(ParameterSet<Scalar>& set, const std::string& prefix) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(set, prefix + ".layer" + std::to_string(i));
  }
}

template <typename Scalar>
ResidualAttention<Scalar>::ResidualAttention(Index channels, AttentionModuleConfig config)
    : channels_(channels), config_(config) {
  if (config.pool_stages < 1) throw std::invalid_argument("residual_attention: pool_stages < 1");
  const Conv2dOptions same{1, 1, Padding2d::uniform(1)};
  for (Index i = 0; i < config.feature_branch_layers; ++i) {
    feature_.emplace_back(channels, channels, 3, 3, same);
  }
  for (Index i = 0; i < config.pool_stages; ++i) {
    down_.emplace_back(channels, channels, 3, 3, same);
    up_.emplace_back(channels, channels, 3, 3, same);
  }
  mask_weight_ = Tensor<Scalar>::parameter({channels, channels, 1, 1});
  mask_bias_ = Tensor<Scalar>::parameter({channels});
}

template <typename Scalar>
Tensor<Scalar> ResidualAttention<Scalar>::attention_branch(const Tensor<Scalar>& x, Mode mode) {
  const Index stages = config_.pool_stages;
  std::vector<std::pair<Index, Index>> sizes;
  std::vector<Tensor<Scalar>> down_outputs;
  Tensor<Scalar> h = x;
  for (Index i = 0; i < stages; ++i) {
    sizes.emplace_back(h.dim(2), h.dim(3));
    h = pool2d(h, PoolKind::kMax, Pool2dOptions{2, 2, 2, 2, {}});
    h = down_[i](h, mode);
    down_outputs.push_back(h);
  }
  // down_outputs[i] lives at resolution level i + 1; sizes[i] is level i.
  for (Index level = stages - 1; level >= 0; --level) {
    h = up_[stages - 1 - level](h, mode);
    h = bilinear_upsample(h, sizes[level].first, sizes[level].second);
    if (config_.skip_connections && level >= 1) h = add(h, down_outputs[level - 1]);
  }
  return sigmoid(conv2d(h, mask_weight_, mask_bias_, Conv2dOptions{}));
}

template <typename Scalar>
AttentionOutput<Scalar> ResidualAttention<Scalar>::operator()(const Tensor<Scalar>& x, Mode mode) {
  if (x.ndim() != 4 || x.dim(1) != channels_) {
    throw std::invalid_argument("residual_attention: expected " + std::to_string(channels_) +
                                " channels, got " + to_string(x.shape()));
  }
  const Index min_extent = Index(1) << config_.pool_stages;
  if (x.dim(2) < min_extent || x.dim(3) < min_extent) {
    throw std::invalid_argument("residual_attention: input " + to_string(x.shape()) +
                                " too small for " + std::to_string(config_.pool_stages) +
                                " pooling stages");
  }
  Tensor<Scalar> feature = x;
  for (auto& layer : feature_) feature = layer(feature, mode);
  if (ablated_) {
    return {feature, Tensor<Scalar>(feature.shape(), Scalar(0)), feature};
  }
  Tensor<Scalar> attention = attention_branch(x, mode);
  Tensor<Scalar> output = add(feature, multiply(attention, feature));
  return {output, attention, feature};
}

template <typename Scalar>
void ResidualAttention<Scalar>::collect(ParameterSet<Scalar>& set, const std::string& prefix) {
  for (size_t i = 0; i < feature_.size(); ++i) {
    feature_[i].collect(set, prefix + ".feature" + std::to_string(i));
  }
  for (size_t i = 0; i < down_.size(); ++i) down_[i].collect(set, prefix + ".down" + std::to_string(i));
  for (size_t i = 0; i < up_.size(); ++i) up_[i].collect(set, prefix + ".up" + std::to_string(i));
  set.add_weight(prefix + ".mask.weight", mask_weight_, channels_);
  set.add_constant(prefix + ".mask.bias", mask_bias_, Scalar(0));
}

template Tensor<float> conv_bn_relu(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                    const Tensor<float>&, BatchNormState<float>&,
                                    const Conv2dOptions&, Mode);
template Tensor<double> conv_bn_relu(const Tensor<double>&, const Tensor<double>&,
                                     const Tensor<double>&, const Tensor<double>&,
                                     BatchNormState<double>&, const Conv2dOptions&, Mode);
template class ConvBnRelu<float>;
template class ConvBnRelu<double>;
template class DenseBlock<float>;
template class DenseBlock<double>;
template class ResidualAttention<float>;
template class ResidualAttention<double>;

}  // namespace acnv
