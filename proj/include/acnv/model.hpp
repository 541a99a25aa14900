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

// The attention convolutional network: dense-attention encoder, column
// slicing into a feature sequence, a stack of strided convolutions over the
// sequence packed as a one-channel map, and a per-frame softmax classifier.

#ifndef ACNV_MODEL_HPP_
#define ACNV_MODEL_HPP_

#include <string>
#include <string_view>
#include <vector>

#include "acnv/labels.hpp"
#include "acnv/layers.hpp"

namespace acnv {

/// One row of the architecture table.
struct LayerSpec {
  std::string module;
  std::string layer;
  std::string config;
  Shape output;  // (C, H, W) for one image
};

/// Everything needed to rebuild the network; the default is the full
/// 32x100 recognizer.
struct ArchitectureDescriptor {
  Index input_height = 32;
  Index input_width = 100;
  Index stem_channels = 36;
  DenseBlockConfig dense;
  std::vector<Index> attention_stages{3, 2};
  Index top_channels = 512;
  Index sequence_layers = 4;
  Index sequence_kernel = 3;
  Index num_classes = kNumClasses;
  bool attention_enabled = true;

  /// Flat key=value text, one field per line.
  std::string serialize() const;
  static ArchitectureDescriptor parse(std::string_view text);

  std::vector<LayerSpec> layers() const;
  Shape encoder_output() const;  // (C, H, W)
  Index sequence_length() const { return encoder_output()[2]; }
  Index sequence_input_dim() const;
  Index frame_dim() const;
  Index receptive_field() const { return 1 + sequence_layers * (sequence_kernel - 1); }

  bool operator==(const ArchitectureDescriptor& other) const;
};

/// W frames of equal dimension per batch item, stored as [B, W, D].
template <typename Scalar>
struct FeatureSequence {
  Tensor<Scalar> frames;

  Index batch() const { return frames.dim(0); }
  Index length() const { return frames.dim(1); }
  Index dim() const { return frames.dim(2); }

  /// Single-item sequence from explicit frames; ragged input is rejected.
  static FeatureSequence from_frames(const std::vector<std::vector<Scalar>>& frames);
};

/// Per-frame class distributions stored as [B, W, K].
template <typename Scalar>
struct DistributionSequence {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Tensor<Scalar> probs;

  Index batch() const { return probs.dim(0); }
  Index length() const { return probs.dim(1); }
  Index num_classes() const { return probs.dim(2); }
  /// Copy of item b as a W x K matrix.
  Matrix item(Index b) const;
};

template <typename Scalar>
FeatureSequence<Scalar> map_to_sequence(const Tensor<Scalar>& maps);

template <typename Scalar>
Tensor<Scalar> sequence_to_map(const FeatureSequence<Scalar>& seq);

/// Shared affine map per frame; returns pre-softmax scores as [B, W, K].
template <typename Scalar>
Tensor<Scalar> project_logits(const FeatureSequence<Scalar>& seq, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>& bias);

/// softmax(weight^T c_t + bias) for every frame.
template <typename Scalar>
DistributionSequence<Scalar> project(const FeatureSequence<Scalar>& seq,
                                     const Tensor<Scalar>& weight, const Tensor<Scalar>& bias);

/// Softmax over the class axis of [B, W, K] scores.
template <typename Scalar>
DistributionSequence<Scalar> to_distribution(const Tensor<Scalar>& logits);

/// Stack of single-channel conv-bn-relu layers, stride 2 in height and 1 in
/// width, zero-padded so the sequence length is unchanged.
template <typename Scalar>
class ConvSequenceModel {
 public:
  ConvSequenceModel() = default;
  ConvSequenceModel(Index layers, Index kernel);

  FeatureSequence<Scalar> operator()(const Tensor<Scalar>& map, Mode mode);

  Index receptive_field() const { return 1 + Index(layers_.size()) * (kernel_ - 1); }
  std::vector<ConvBnRelu<Scalar>>& layers() { return layers_; }
  void collect(ParameterSet<Scalar>& set, const std::string& prefix);

 private:
  Index kernel_ = 3;
  std::vector<ConvBnRelu<Scalar>> layers_;
};

template <typename Scalar>
struct EncoderTrace {
  std::vector<AttentionOutput<Scalar>> attention;
};

template <typename Scalar>
struct ForwardResult {
  Tensor<Scalar> logits;  // [B, W, K]
  DistributionSequence<Scalar> distribution;
};

template <typename Scalar>
class AttentionConvNet {
 public:
  explicit AttentionConvNet(ArchitectureDescriptor arch = {});

  AttentionConvNet(const AttentionConvNet&) = delete;
  AttentionConvNet& operator=(const AttentionConvNet&) = delete;
  AttentionConvNet(AttentionConvNet&&) = default;
  AttentionConvNet& operator=(AttentionConvNet&&) = default;

  /// [B, 1, H, W] images in [-1, 1] -> [B, top_channels, H/8, W/4].
  Tensor<Scalar> encode(const Tensor<Scalar>& images, Mode mode,
                        EncoderTrace<Scalar>* trace = nullptr);

  ForwardResult<Scalar> forward(const Tensor<Scalar>& images, Mode mode,
                                EncoderTrace<Scalar>* trace = nullptr);

  ParameterSet<Scalar> parameters();

  /// A := 0 in every attention module.
  void set_attention_ablated(bool ablated);

  const ArchitectureDescriptor& architecture() const { return arch_; }
  ConvSequenceModel<Scalar>& sequence_model() { return sequence_; }
  std::vector<ResidualAttention<Scalar>>& attention_modules() { return attention_; }
  ConvBnRelu<Scalar>& stem() { return stem_; }
  Tensor<Scalar>& classifier_weight() { return classifier_weight_; }
  Tensor<Scalar>& classifier_bias() { return classifier_bias_; }

 private:
  ArchitectureDescriptor arch_;
  ConvBnRelu<Scalar> stem_;
  std::vector<DenseBlock<Scalar>> dense_;
  std::vector<ResidualAttention<Scalar>> attention_;
  ConvBnRelu<Scalar> top_conv_;
  ConvBnRelu<Scalar> final_conv_;
  ConvSequenceModel<Scalar> sequence_;
  Tensor<Scalar> classifier_weight_;  // [frame_dim, num_classes]
  Tensor<Scalar> classifier_bias_;    // [num_classes]
};

extern template class ConvSequenceModel<float>;
extern template class ConvSequenceModel<double>;
extern template class AttentionConvNet<float>;
extern template class AttentionConvNet<double>;

}  // namespace acnv

#endif  // ACNV_MODEL_HPP_
