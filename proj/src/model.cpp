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

#include "acnv/model.hpp"

#include <sstream>
#include <stdexcept>

#include "acnv/config.hpp"

namespace acnv {

namespace {

Index sequence_height_after(Index height, Index layers, Index kernel) {
  const Index pad = kernel / 2;
  for (Index i = 0; i < layers; ++i) height = (height + 2 * pad - kernel) / 2 + 1;
  return height;
}

// The width-preserving 2x2 / stride 2x1 pool at the top of the encoder.
const Pool2dOptions kTopPool{2, 2, 2, 1, Padding2d{0, 0, 0, 1}};
const Pool2dOptions kHalvingPool{2, 2, 2, 2, {}};

}  // namespace

std::string ArchitectureDescriptor::serialize() const {
  std::ostringstream os;
  os << "input_height=" << input_height << "\n"
     << "input_width=" << input_width << "\n"
     << "stem_channels=" << stem_channels << "\n"
     << "dense_layers=" << dense.num_layers << "\n"
     << "growth_rate=" << dense.growth_rate << "\n"
     << "dense_kernel=" << dense.kernel << "\n"
     << "attention_stages=";
  for (size_t i = 0; i < attention_stages.size(); ++i) os << (i ? "," : "") << attention_stages[i];
  os << "\n"
     << "top_channels=" << top_channels << "\n"
     << "sequence_layers=" << sequence_layers << "\n"
     << "sequence_kernel=" << sequence_kernel << "\n"
     << "num_classes=" << num_classes << "\n"
     << "attention_enabled=" << (attention_enabled ? 1 : 0) << "\n";
  return os.str();
}

ArchitectureDescriptor ArchitectureDescriptor::parse(std::string_view text) {
  auto kv = KeyValues::parse(text, "architecture");
  kv.require_known({"input_height", "input_width", "stem_channels", "dense_layers", "growth_rate",
                    "dense_kernel", "attention_stages", "top_channels", "sequence_layers",
                    "sequence_kernel", "num_classes", "attention_enabled"});
  ArchitectureDescriptor a;
  a.input_height = kv.get_int("input_height", a.input_height);
  a.input_width = kv.get_int("input_width", a.input_width);
  a.stem_channels = kv.get_int("stem_channels", a.stem_channels);
  a.dense.num_layers = kv.get_int("dense_layers", a.dense.num_layers);
  a.dense.growth_rate = kv.get_int("growth_rate", a.dense.growth_rate);
  a.dense.kernel = kv.get_int("dense_kernel", a.dense.kernel);
  auto stages = kv.get_int_list("attention_stages", {3, 2});
  a.attention_stages.assign(stages.begin(), stages.end());
  a.top_channels = kv.get_int("top_channels", a.top_channels);
  a.sequence_layers = kv.get_int("sequence_layers", a.sequence_layers);
  a.sequence_kernel = kv.get_int("sequence_kernel", a.sequence_kernel);
  a.num_classes = kv.get_int("num_classes", a.num_classes);
  a.attention_enabled = kv.get_bool("attention_enabled", a.attention_enabled);
  return a;
}

bool ArchitectureDescriptor::operator==(const ArchitectureDescriptor& o) const {
  return input_height == o.input_height && input_width == o.input_width &&
         stem_channels == o.stem_channels && dense.num_layers == o.dense.num_layers &&
         dense.growth_rate == o.dense.growth_rate && dense.kernel == o.dense.kernel &&
         attention_stages == o.attention_stages && top_channels == o.top_channels &&
         sequence_layers == o.sequence_layers && sequence_kernel == o.sequence_kernel &&
         num_classes == o.num_classes && attention_enabled == o.attention_enabled;
}

Shape ArchitectureDescriptor::encoder_output() const {
  const Index h = (input_height / 4 - 2) / 2 + 1;
  return {top_channels, h, input_width / 4};
}

Index ArchitectureDescriptor::sequence_input_dim() const {
  const Shape enc = encoder_output();
  return enc[0] * enc[1];
}

Index ArchitectureDescriptor::frame_dim() const {
  return sequence_height_after(sequence_input_dim(), sequence_layers, sequence_kernel);
}

std::vector<LayerSpec> ArchitectureDescriptor::layers() const {
  std::vector<LayerSpec> rows;
  Index c = stem_channels, h = input_height, w = input_width;
  const std::string k = std::to_string(dense.kernel);
  auto dense_row = [&] {
    c = dense.output_channels(c);
    rows.push_back({"Encoder", "Dense Block",
                    "[" + k + "x" + k + ", stride 1x1] x " + std::to_string(dense.num_layers),
                    {c, h, w}});
  };
  rows.push_back({"Encoder", "Convolution", "3x3, " + std::to_string(stem_channels) + ", stride 1x1",
                  {c, h, w}});
  for (size_t i = 0; i < attention_stages.size(); ++i) {
    dense_row();
    rows.push_back({"Encoder", "Attention Module",
                    "Attention " + std::to_string(i + 1) + " (" +
                        std::to_string(attention_stages[i]) + " pooling stages)",
                    {c, h, w}});
    h /= 2;
    w /= 2;
    rows.push_back({"Encoder", "Average Pooling", "2x2, stride 2x2", {c, h, w}});
  }
  dense_row();
  c = top_channels;
  rows.push_back({"Encoder", "Convolution", "3x3, " + std::to_string(c) + ", stride 1x1", {c, h, w}});
  h = (h - 2) / 2 + 1;
  rows.push_back({"Encoder", "Average Pooling", "2x2, stride 2x1", {c, h, w}});
  rows.push_back({"Encoder", "Convolution", "3x3, " + std::to_string(c) + ", stride 1x1", {c, h, w}});
  Index seq_h = c * h;
  rows.push_back({"Sequence", "Map to Sequence + Sequence to Map", "1 channel", {1, seq_h, w}});
  const std::string sk = std::to_string(sequence_kernel);
  for (Index i = 0; i < sequence_layers; ++i) {
    seq_h = sequence_height_after(seq_h, 1, sequence_kernel);
    rows.push_back({"CNN", "Convolution", sk + "x" + sk + ", 1, stride 2x1", {1, seq_h, w}});
  }
  rows.push_back({"CTC", "Linear + Softmax", std::to_string(num_classes) + " classes",
                  {num_classes, 1, w}});
  return rows;
}

template <typename Scalar>
FeatureSequence<Scalar> FeatureSequence<Scalar>::from_frames(
    const std::vector<std::vector<Scalar>>& frames) {
  if (frames.empty()) throw std::invalid_argument("feature sequence: no frames");
  const size_t d = frames.front().size();
  typename Tensor<Scalar>::Array values(Index(frames.size() * d));
  for (size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].size() != d) {
      throw std::invalid_argument("feature sequence: frame " + std::to_string(t) + " has dim " +
                                  std::to_string(frames[t].size()) + ", expected " +
                                  std::to_string(d));
    }
    for (size_t i = 0; i < d; ++i) values[Index(t * d + i)] = frames[t][i];
  }
  return {Tensor<Scalar>({1, Index(frames.size()), Index(d)}, std::move(values))};
}

template <typename Scalar>
typename DistributionSequence<Scalar>::Matrix DistributionSequence<Scalar>::item(Index b) const {
  const Index w = length(), k = num_classes();
  return Eigen::Map<const Matrix>(probs.data() + b * w * k, w, k);
}

template <typename Scalar>
FeatureSequence<Scalar> map_to_sequence(const Tensor<Scalar>& maps) {
  return {columns_to_frames(maps)};
}

template <typename Scalar>
Tensor<Scalar> sequence_to_map(const FeatureSequence<Scalar>& seq) {
  if (!seq.frames.defined() || seq.frames.ndim() != 3 || seq.length() == 0) {
    throw std::invalid_argument("sequence_to_map: expected a nonempty [B, W, D] sequence");
  }
  return frames_to_columns(seq.frames);
}

template <typename Scalar>
Tensor<Scalar> project_logits(const FeatureSequence<Scalar>& seq, const Tensor<Scalar>& weight,
                              const Tensor<Scalar>& bias) {
  if (weight.ndim() != 2 || weight.dim(0) != seq.dim()) {
    throw std::invalid_argument("project: frame dim " + std::to_string(seq.dim()) +
                                " does not match weight " + to_string(weight.shape()));
  }
  const Index b = seq.batch(), w = seq.length();
  auto flat = reshape(seq.frames, {b * w, seq.dim()});
  return reshape(matmul_affine(flat, weight, bias), {b, w, weight.dim(1)});
}

template <typename Scalar>
DistributionSequence<Scalar> to_distribution(const Tensor<Scalar>& logits) {
  if (logits.ndim() != 3) {
    throw std::invalid_argument("to_distribution: expected [B, W, K], got " +
                                to_string(logits.shape()));
  }
  const Index b = logits.dim(0), w = logits.dim(1), k = logits.dim(2);
  return {reshape(row_softmax(reshape(logits, {b * w, k})), {b, w, k})};
}

template <typename Scalar>
DistributionSequence<Scalar> project(const FeatureSequence<Scalar>& seq,
                                     const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  return to_distribution(project_logits(seq, weight, bias));
}

template <typename Scalar>
ConvSequenceModel<Scalar>::ConvSequenceModel(Index layers, Index kernel) : kernel_(kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("conv_sequence_model: kernel must be odd, got " +
                                std::to_string(kernel));
  }
  const Index pad = kernel / 2;
  for (Index i = 0; i < layers; ++i) {
    layers_.emplace_back(1, 1, kernel, kernel, Conv2dOptions{2, 1, Padding2d::uniform(pad)});
  }
}

template <typename Scalar>
FeatureSequence<Scalar> ConvSequenceModel<Scalar>::operator()(const Tensor<Scalar>& map, Mode mode) {
  if (map.ndim() != 4 || map.dim(1) != 1) {
    throw std::invalid_argument("conv_sequence_model: expected [B, 1, D, W], got " +
                                to_string(map.shape()));
  }
  const Index factor = Index(1) << layers_.size();
  if (map.dim(2) % factor != 0) {
    throw std::invalid_argument("conv_sequence_model: height " + std::to_string(map.dim(2)) +
                                " not divisible by " + std::to_string(factor));
  }
  const Index width = map.dim(3);
  Tensor<Scalar> h = map;
  for (auto& layer : layers_) {
    h = layer(h, mode);
    if (h.dim(3) != width) {
      throw std::logic_error("conv_sequence_model: layer changed sequence length " +
                             std::to_string(width) + " -> " + std::to_string(h.dim(3)));
    }
  }
  return map_to_sequence(h);
}

template <typename Scalar>
void ConvSequenceModel<Scalar>::collect(ParameterSet<Scalar>& set, const std::string& prefix) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect(set, prefix + ".conv" + std::to_string(i));
  }
}

template <typename Scalar>
AttentionConvNet<Scalar>::AttentionConvNet(ArchitectureDescriptor arch) : arch_(std::move(arch)) {
  if (arch_.attention_stages.size() != 2) {
    throw std::invalid_argument("architecture: expected exactly two attention modules");
  }
  if (arch_.num_classes < 2) throw std::invalid_argument("architecture: need at least 2 classes");
  const Conv2dOptions same{1, 1, Padding2d::uniform(1)};
  stem_ = ConvBnRelu<Scalar>(1, arch_.stem_channels, 3, 3, same);
  Index c = arch_.stem_channels;
  for (size_t i = 0; i < 3; ++i) {
    dense_.emplace_back(c, arch_.dense);
    c = arch_.dense.output_channels(c);
    if (i < 2) {
      attention_.emplace_back(c, AttentionModuleConfig{arch_.attention_stages[i], 1, true});
      attention_.back().set_ablated(!arch_.attention_enabled);
    }
  }
  top_conv_ = ConvBnRelu<Scalar>(c, arch_.top_channels, 3, 3, same);
  final_conv_ = ConvBnRelu<Scalar>(arch_.top_channels, arch_.top_channels, 3, 3, same);
  sequence_ = ConvSequenceModel<Scalar>(arch_.sequence_layers, arch_.sequence_kernel);
  classifier_weight_ = Tensor<Scalar>::parameter({arch_.frame_dim(), arch_.num_classes});
  classifier_bias_ = Tensor<Scalar>::parameter({arch_.num_classes});
}

template <typename Scalar>
Tensor<Scalar> AttentionConvNet<Scalar>::encode(const Tensor<Scalar>& images, Mode mode,
                                                EncoderTrace<Scalar>* trace) {
  if (images.ndim() != 4 || images.dim(1) != 1 || images.dim(2) != arch_.input_height ||
      images.dim(3) != arch_.input_width) {
    throw std::invalid_argument("encode: expected [B, 1, " + std::to_string(arch_.input_height) +
                                ", " + std::to_string(arch_.input_width) + "] images, got " +
                                to_string(images.shape()));
  }
  Tensor<Scalar> h = stem_(images, mode);
  for (size_t i = 0; i < 2; ++i) {
    h = dense_[i](h, mode);
    auto att = attention_[i](h, mode);
    h = pool2d(att.output, PoolKind::kAverage, kHalvingPool);
    if (trace) trace->attention.push_back(std::move(att));
  }
  h = dense_[2](h, mode);
  h = top_conv_(h, mode);
  h = pool2d(h, PoolKind::kAverage, kTopPool);
  return final_conv_(h, mode);
}

template <typename Scalar>
ForwardResult<Scalar> AttentionConvNet<Scalar>::forward(const Tensor<Scalar>& images, Mode mode,
                                                        EncoderTrace<Scalar>* trace) {
  auto maps = encode(images, mode, trace);
  auto modeled = sequence_(sequence_to_map(map_to_sequence(maps)), mode);
  auto logits = project_logits(modeled, classifier_weight_, classifier_bias_);
  DistributionSequence<Scalar> dist;
  {
    NoGradGuard no_grad;
    dist = to_distribution(logits);
  }
  return {logits, dist};
}

template <typename Scalar>
ParameterSet<Scalar> AttentionConvNet<Scalar>::parameters() {
  ParameterSet<Scalar> set;
  stem_.collect(set, "encoder.stem");
  for (size_t i = 0; i < dense_.size(); ++i) {
    dense_[i].collect(set, "encoder.dense" + std::to_string(i + 1));
    if (i < attention_.size()) attention_[i].collect(set, "encoder.attention" + std::to_string(i + 1));
  }
  top_conv_.collect(set, "encoder.top");
  final_conv_.collect(set, "encoder.final");
  sequence_.collect(set, "sequence");
  set.add_weight("classifier.weight", classifier_weight_, arch_.frame_dim());
  set.add_constant("classifier.bias", classifier_bias_, Scalar(0));
  return set;
}

template <typename Scalar>
void AttentionConvNet<Scalar>::set_attention_ablated(bool ablated) {
  arch_.attention_enabled = !ablated;
  for (auto& m : attention_) m.set_ablated(ablated);
}

#define ACNV_INSTANTIATE_MODEL(S)                                                              \
  template struct FeatureSequence<S>;                                                          \
  template struct DistributionSequence<S>;                                                     \
  template FeatureSequence<S> map_to_sequence(const Tensor<S>&);                               \
  template Tensor<S> sequence_to_map(const FeatureSequence<S>&);                               \
  template Tensor<S> project_logits(const FeatureSequence<S>&, const Tensor<S>&,               \
                                    const Tensor<S>&);                                         \
  template DistributionSequence<S> project(const FeatureSequence<S>&, const Tensor<S>&,        \
                                           const Tensor<S>&);                                  \
  template DistributionSequence<S> to_distribution(const Tensor<S>&);                          \
  template class ConvSequenceModel<S>;                                                         \
  template class AttentionConvNet<S>;

ACNV_INSTANTIATE_MODEL(float)
ACNV_INSTANTIATE_MODEL(double)

#undef ACNV_INSTANTIATE_MODEL

}  // namespace acnv
