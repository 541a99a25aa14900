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

#include "acnv/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace acnv {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[4] = {'A', 'C', 'N', 'V'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(const std::string& s) { out_.append(s); }
  void text(const std::string& s) {
    put(std::uint32_t(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string text() { return bytes(get<std::uint32_t>()); }
  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(source_ + ": " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void need(size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated checkpoint");
  }
  const std::string& data_;
  std::string source_;
  size_t pos_ = 0;
};

void write_record(Writer& w, const TensorRecord& r) {
  if (Index(r.values.size()) != numel(r.shape)) {
    throw std::logic_error("checkpoint: record " + r.name + " size does not match its shape");
  }
  w.text(r.name);
  w.put(std::uint8_t(r.dtype));
  w.put(std::uint32_t(r.shape.size()));
  for (Index d : r.shape) w.put(std::uint64_t(d));
  for (double v : r.values) {
    switch (r.dtype) {
      case DType::kFloat32: w.put(float(v)); break;
      case DType::kFloat64: w.put(v); break;
      case DType::kInt64: w.put(std::int64_t(v)); break;
    }
  }
}

TensorRecord read_record(Reader& r) {
  TensorRecord rec;
  rec.name = r.text();
  const auto dtype = r.get<std::uint8_t>();
  if (dtype > std::uint8_t(DType::kInt64)) r.fail("unknown dtype " + std::to_string(dtype));
  rec.dtype = DType(dtype);
  const auto ndim = r.get<std::uint32_t>();
  if (ndim > 8) r.fail("implausible rank " + std::to_string(ndim));
  for (std::uint32_t i = 0; i < ndim; ++i) rec.shape.push_back(Index(r.get<std::uint64_t>()));
  const Index n = numel(rec.shape);
  if (n < 0 || n > (Index(1) << 32)) r.fail("implausible tensor size");
  rec.values.resize(size_t(n));
  for (auto& v : rec.values) {
    switch (rec.dtype) {
      case DType::kFloat32: v = r.get<float>(); break;
      case DType::kFloat64: v = r.get<double>(); break;
      case DType::kInt64: v = double(r.get<std::int64_t>()); break;
    }
  }
  return rec;
}

template <typename Scalar>
constexpr DType dtype_of() {
  return std::is_same_v<Scalar, float> ? DType::kFloat32 : DType::kFloat64;
}

template <typename Scalar, typename Derived>
TensorRecord make_record(std::string name, Shape shape, const Eigen::DenseBase<Derived>& values) {
  TensorRecord r{std::move(name), dtype_of<Scalar>(), std::move(shape), {}};
  r.values.resize(size_t(values.size()));
  for (Index i = 0; i < values.size(); ++i) r.values[size_t(i)] = double(values(i));
  return r;
}

template <typename Array>
void copy_into(const TensorRecord& r, Array& dst, const std::string& expected_name) {
  if (Index(r.values.size()) != dst.size()) {
    throw std::runtime_error("checkpoint: " + expected_name + " has " +
                             std::to_string(r.values.size()) + " values, expected " +
                             std::to_string(dst.size()));
  }
  for (Index i = 0; i < dst.size(); ++i) dst(i) = typename Array::Scalar(r.values[size_t(i)]);
}

}  // namespace

std::string Checkpoint::encode() const {
  Writer w;
  w.bytes(std::string(kMagic, 4));
  w.put(kCheckpointVersion);
  w.put(step);
  w.text(architecture.serialize());
  w.put(std::uint32_t(tensors.size()));
  for (const auto& t : tensors) write_record(w, t);
  w.put(std::uint8_t(optimizer ? 1 : 0));
  if (optimizer) {
    w.put(optimizer->steps);
    w.put(optimizer->options.learning_rate);
    w.put(optimizer->options.beta1);
    w.put(optimizer->options.beta2);
    w.put(optimizer->options.epsilon);
    w.put(std::uint32_t(optimizer->moments.size()));
    for (const auto& t : optimizer->moments) write_record(w, t);
  }
  return w.take();
}

Checkpoint Checkpoint::decode(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  if (r.bytes(4) != std::string(kMagic, 4)) r.fail("bad magic, not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.step = r.get<std::uint64_t>();
  c.architecture = ArchitectureDescriptor::parse(r.text());
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) c.tensors.push_back(read_record(r));
  if (r.get<std::uint8_t>()) {
    OptimizerRecord o;
    o.steps = r.get<std::int64_t>();
    o.options.learning_rate = r.get<double>();
    o.options.beta1 = r.get<double>();
    o.options.beta2 = r.get<double>();
    o.options.epsilon = r.get<double>();
    const auto n = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n; ++i) o.moments.push_back(read_record(r));
    c.optimizer = std::move(o);
  }
  if (!r.done()) r.fail("trailing bytes");
  return c;
}

void Checkpoint::save(const std::string& path) const {
  namespace fs = std::filesystem;
  const std::string bytes = encode();
  const fs::path target(path);
  const fs::path temp = target.string() + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + temp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + temp.string());
  }
  std::error_code ec;
  fs::rename(temp, target, ec);
  if (ec) {
    fs::remove(temp);
    throw std::runtime_error("cannot move checkpoint into " + path + ": " + ec.message());
  }
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return decode(ss.str(), path);
}

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

template <typename Scalar>
Checkpoint capture(AttentionConvNet<Scalar>& net, std::uint64_t step, const Adam<Scalar>* optimizer) {
  Checkpoint c;
  c.step = step;
  c.architecture = net.architecture();
  ParameterSet<Scalar> params = net.parameters();
  for (const auto& p : params.tensors) {
    c.tensors.push_back(make_record<Scalar>(p.name, p.tensor.shape(), p.tensor.values()));
  }
  for (const auto& [name, state] : params.norms) {
    const Index ch = state->running_mean.size();
    c.tensors.push_back(make_record<Scalar>(name + ".running_mean", {ch}, state->running_mean));
    c.tensors.push_back(make_record<Scalar>(name + ".running_var", {ch}, state->running_var));
    c.tensors.push_back({name + ".batches_tracked", DType::kInt64, {1}, {double(state->batches_tracked)}});
  }
  if (optimizer) {
    OptimizerRecord o;
    o.steps = optimizer->steps();
    o.options = optimizer->options();
    const auto& slots = optimizer->moments();
    const auto& tensors = optimizer->parameters().tensors;
    for (size_t i = 0; i < slots.size(); ++i) {
      const Shape& shape = tensors[i].tensor.shape();
      o.moments.push_back(make_record<Scalar>(tensors[i].name + ".m", shape, slots[i].first));
      o.moments.push_back(make_record<Scalar>(tensors[i].name + ".v", shape, slots[i].second));
    }
    c.optimizer = std::move(o);
  }
  return c;
}

template <typename Scalar>
void restore(const Checkpoint& c, AttentionConvNet<Scalar>& net, Adam<Scalar>* optimizer) {
  if (!(c.architecture == net.architecture())) {
    throw std::runtime_error("checkpoint: architecture does not match the network");
  }
  auto require = [&](const std::string& name) -> const TensorRecord& {
    const TensorRecord* r = c.find(name);
    if (!r) throw std::runtime_error("checkpoint: missing tensor " + name);
    return *r;
  };
  ParameterSet<Scalar> params = net.parameters();
  for (auto& p : params.tensors) {
    const TensorRecord& r = require(p.name);
    if (r.shape != p.tensor.shape()) {
      throw std::runtime_error("checkpoint: " + p.name + " has shape " + to_string(r.shape) +
                               ", network expects " + to_string(p.tensor.shape()));
    }
    copy_into(r, p.tensor.values(), p.name);
  }
  for (auto& [name, state] : params.norms) {
    copy_into(require(name + ".running_mean"), state->running_mean, name + ".running_mean");
    copy_into(require(name + ".running_var"), state->running_var, name + ".running_var");
    const TensorRecord& tracked = require(name + ".batches_tracked");
    if (tracked.values.size() != 1) throw std::runtime_error("checkpoint: bad " + name + ".batches_tracked");
    state->batches_tracked = std::int64_t(tracked.values[0]);
  }
  if (optimizer) {
    if (!c.optimizer) throw std::runtime_error("checkpoint: no optimizer state to resume from");
    const auto& tensors = params.tensors;
    if (c.optimizer->moments.size() != 2 * tensors.size()) {
      throw std::runtime_error("checkpoint: optimizer state does not match the parameter list");
    }
    std::vector<AdamMoments<Scalar>> slots(tensors.size());
    for (size_t i = 0; i < tensors.size(); ++i) {
      const Index n = tensors[i].tensor.size();
      slots[i].first.resize(n);
      slots[i].second.resize(n);
      copy_into(c.optimizer->moments[2 * i], slots[i].first, tensors[i].name + ".m");
      copy_into(c.optimizer->moments[2 * i + 1], slots[i].second, tensors[i].name + ".v");
    }
    optimizer->options() = c.optimizer->options;
    optimizer->restore(c.optimizer->steps, std::move(slots));
  }
}

template Checkpoint capture(AttentionConvNet<float>&, std::uint64_t, const Adam<float>*);
template Checkpoint capture(AttentionConvNet<double>&, std::uint64_t, const Adam<double>*);
template void restore(const Checkpoint&, AttentionConvNet<float>&, Adam<float>*);
template void restore(const Checkpoint&, AttentionConvNet<double>&, Adam<double>*);

}  // namespace acnv
