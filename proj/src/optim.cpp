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

#include "acnv/optim.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace acnv {

namespace {

template <typename Scalar>
void fill_normal(Tensor<Scalar>& t, Index fan_in, std::mt19937_64& rng) {
  if (fan_in < 1) throw std::invalid_argument("init_msra: fan_in must be >= 1");
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / double(fan_in)));
  for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(normal(rng));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> init_msra(const Shape& shape, Index fan_in, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor<Scalar> t = Tensor<Scalar>::parameter(shape);
  fill_normal(t, fan_in, rng);
  return t;
}

template <typename Scalar>
void initialize(ParameterSet<Scalar>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : params.tensors) {
    if (p.fan_in > 0) {
      fill_normal(p.tensor, p.fan_in, rng);
    } else {
      p.tensor.values().setConstant(p.fill);
    }
  }
  for (auto& [name, state] : params.norms) {
    state->running_mean.setZero();
    state->running_var.setOnes();
    state->batches_tracked = 0;
  }
}

template <typename Scalar>
double gradient_norm(const ParameterSet<Scalar>& params) {
  double sum = 0;
  for (const auto& p : params.tensors) {
    if (!p.tensor.has_grad()) continue;
    const auto& g = p.tensor.grad();
    if (!g.isFinite().all()) throw std::runtime_error("non-finite gradient in " + p.name);
    sum += g.template cast<double>().square().sum();
  }
  return std::sqrt(sum);
}

template <typename Scalar>
double clip_gradients(ParameterSet<Scalar>& params, double threshold) {
  const double norm = gradient_norm(params);
  if (norm <= threshold) return 1.0;
  const double scale = threshold / norm;
  for (auto& p : params.tensors) {
    if (p.tensor.has_grad()) p.tensor.grad() *= Scalar(scale);
  }
  return scale;
}

template <typename Scalar>
void adam_update(typename Tensor<Scalar>::Array& value, const typename Tensor<Scalar>::Array& grad,
                 AdamMoments<Scalar>& moments, std::int64_t step, const AdamOptions& o) {
  if (grad.size() != value.size() || moments.first.size() != value.size() ||
      moments.second.size() != value.size()) {
    throw std::invalid_argument("adam_update: gradient or moment size " + std::to_string(grad.size()) +
                                " does not match parameter size " + std::to_string(value.size()));
  }
  if (step < 1) throw std::invalid_argument("adam_update: step counts from 1");
  const Scalar b1 = Scalar(o.beta1), b2 = Scalar(o.beta2);
  moments.first = b1 * moments.first + (Scalar(1) - b1) * grad;
  moments.second = b2 * moments.second + (Scalar(1) - b2) * grad.square();
  const Scalar c1 = Scalar(1.0 - std::pow(o.beta1, double(step)));
  const Scalar c2 = Scalar(1.0 - std::pow(o.beta2, double(step)));
  value -= Scalar(o.learning_rate) * (moments.first / c1) /
           ((moments.second / c2).sqrt() + Scalar(o.epsilon));
}

template <typename Scalar>
Adam<Scalar>::Adam(ParameterSet<Scalar> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_.tensors) {
    moments_.push_back({Tensor<Scalar>::Array::Zero(p.tensor.size()),
                        Tensor<Scalar>::Array::Zero(p.tensor.size())});
  }
}

template <typename Scalar>
void Adam<Scalar>::step() {
  ++steps_;
  for (size_t i = 0; i < params_.tensors.size(); ++i) {
    auto& t = params_.tensors[i].tensor;
    if (t.has_grad()) {
      adam_update<Scalar>(t.values(), t.grad(), moments_[i], steps_, options_);
    } else {
      const typename Tensor<Scalar>::Array zero = Tensor<Scalar>::Array::Zero(t.size());
      adam_update<Scalar>(t.values(), zero, moments_[i], steps_, options_);
    }
  }
}

template <typename Scalar>
void Adam<Scalar>::restore(std::int64_t steps, std::vector<AdamMoments<Scalar>> moments) {
  if (moments.size() != params_.tensors.size()) {
    throw std::invalid_argument("adam: optimizer state has " + std::to_string(moments.size()) +
                                " slots for " + std::to_string(params_.tensors.size()) + " parameters");
  }
  for (size_t i = 0; i < moments.size(); ++i) {
    const Index n = params_.tensors[i].tensor.size();
    if (moments[i].first.size() != n || moments[i].second.size() != n) {
      throw std::invalid_argument("adam: moment shape mismatch for " + params_.tensors[i].name);
    }
  }
  steps_ = steps;
  moments_ = std::move(moments);
}

#define ACNV_INSTANTIATE(S)                                                                  \
  template Tensor<S> init_msra<S>(const Shape&, Index, std::uint64_t);                      \
  template void initialize<S>(ParameterSet<S>&, std::uint64_t);                             \
  template double gradient_norm<S>(const ParameterSet<S>&);                                 \
  template double clip_gradients<S>(ParameterSet<S>&, double);                              \
  template void adam_update<S>(Tensor<S>::Array&, const Tensor<S>::Array&, AdamMoments<S>&, \
                               std::int64_t, const AdamOptions&);                           \
  template class Adam<S>;

ACNV_INSTANTIATE(float)
ACNV_INSTANTIATE(double)
#undef ACNV_INSTANTIATE

}  // namespace acnv
