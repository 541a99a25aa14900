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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "acnv/checkpoint.hpp"
#include "acnv/ops.hpp"
#include "acnv/trainer.hpp"

namespace acnv {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  fs::path path_;
};

ArchitectureDescriptor tiny_architecture() {
  ArchitectureDescriptor a;
  a.stem_channels = 4;
  a.dense = DenseBlockConfig{1, 2, 3};
  a.attention_stages = {1, 1};
  a.top_channels = 8;
  a.sequence_layers = 2;
  return a;
}

TrainConfig tiny_config(Index steps) {
  TrainConfig c;
  c.architecture = tiny_architecture();
  c.train_data.count = 64;
  c.test_data.count = 16;
  c.test_data.seed = 2;
  c.batch_size = 4;
  c.steps = steps;
  c.eval_every = 0;
  c.checkpoint_every = 0;
  return c;
}

template <typename Scalar>
AttentionConvNet<Scalar> make_net(std::uint64_t seed, ArchitectureDescriptor arch = tiny_architecture()) {
  AttentionConvNet<Scalar> net(std::move(arch));
  auto params = net.parameters();
  initialize(params, seed);
  return net;
}

std::vector<const GrayImage*> image_pointers(const std::vector<Sample>& samples) {
  std::vector<const GrayImage*> out;
  for (const auto& s : samples) out.push_back(&s.image);
  return out;
}

TEST_CASE("msra draws have standard deviation sqrt(2 / fan_in)") {
  const Tensor<double> w = init_msra<double>({100000}, 8, 7);
  const double mean = w.values().mean();
  const double stddev = std::sqrt((w.values() - mean).square().mean());
  CHECK(std::abs(stddev - 0.5) < 0.025);
  CHECK(std::abs(mean) < 0.01);
  CHECK(init_msra<double>({1000}, 8, 7).values().isApprox(init_msra<double>({1000}, 8, 7).values()));
  CHECK(init_msra<double>({1000}, 8, 7).values().cwiseNotEqual(init_msra<double>({1000}, 8, 8).values()).any());
  CHECK_THROWS_AS(init_msra<double>({4}, 0, 1), std::invalid_argument);
}

TEST_CASE("network initialization") {
  auto net = make_net<double>(3);
  auto params = net.parameters();
  for (const auto& p : params.tensors) {
    INFO(p.name);
    if (p.fan_in > 0) {
      CHECK(p.tensor.values().abs().maxCoeff() > 0);
    } else {
      CHECK((p.tensor.values() == p.fill).all());
    }
    if (p.name.ends_with(".gamma")) CHECK(p.fill == 1.0);
    if (p.name.ends_with(".beta") || p.name.ends_with(".bias")) CHECK(p.fill == 0.0);
  }
  auto again = make_net<double>(3);
  auto other = again.parameters();
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK((params.tensors[i].tensor.values() == other.tensors[i].tensor.values()).all());
  }
}

ParameterSet<double> two_parameters(std::initializer_list<double> a, std::initializer_list<double> b) {
  ParameterSet<double> set;
  auto ta = Tensor<double>::parameter({Index(a.size())});
  auto tb = Tensor<double>::parameter({Index(b.size())});
  ta.grad() = Eigen::Map<const Eigen::ArrayXd>(a.begin(), Index(a.size()));
  tb.grad() = Eigen::Map<const Eigen::ArrayXd>(b.begin(), Index(b.size()));
  set.add_weight("first", ta, 1);
  set.add_weight("second", tb, 1);
  return set;
}

TEST_CASE("gradient clipping scales by the global norm") {
  auto big = two_parameters({6.0}, {8.0});
  CHECK(clip_gradients(big, 5.0) == doctest::Approx(0.5));
  CHECK(gradient_norm(big) == doctest::Approx(5.0));
  CHECK(big.tensors[0].tensor.grad()[0] == doctest::Approx(3.0));

  auto small = two_parameters({0.0, 3.0}, {0.0});
  CHECK(clip_gradients(small, 5.0) == 1.0);
  CHECK(small.tensors[0].tensor.grad()[1] == 3.0);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 10.0);
  for (int trial = 0; trial < 20; ++trial) {
    auto set = two_parameters({n(rng), n(rng), n(rng)}, {n(rng), n(rng)});
    Eigen::ArrayXd before(5);
    before << set.tensors[0].tensor.grad(), set.tensors[1].tensor.grad();
    const double s = clip_gradients(set, 5.0);
    Eigen::ArrayXd after(5);
    after << set.tensors[0].tensor.grad(), set.tensors[1].tensor.grad();
    const double cosine = (before * after).sum() / std::sqrt(before.square().sum() * after.square().sum());
    CHECK(std::abs(cosine - 1.0) < 1e-12);
    CHECK(s > 0);
    CHECK(std::sqrt(after.square().sum()) <= 5.0 + 1e-12);
  }
}

TEST_CASE("non-finite gradients name their parameter") {
  auto set = two_parameters({1.0}, {std::nan("")});
  CHECK_THROWS_WITH_AS(clip_gradients(set, 5.0), doctest::Contains("second"), std::runtime_error);
}

TEST_CASE("adam update") {
  SUBCASE("constant gradient moves against its sign") {
    auto w = Tensor<double>::parameter({2});
    ParameterSet<double> set;
    set.add_weight("w", w, 1);
    Adam<double> adam(set);
    for (int i = 0; i < 100; ++i) {
      w.grad() << 0.3, -2.0;
      adam.step();
    }
    CHECK(w[0] < 0);
    CHECK(w[1] > 0);
    CHECK(adam.steps() == 100);
  }
  SUBCASE("zero gradient is a fixed point") {
    auto w = Tensor<double>::parameter({3}, 0.7);
    ParameterSet<double> set;
    set.add_weight("w", w, 1);
    Adam<double> adam(set);
    for (int i = 0; i < 5; ++i) {
      w.grad().setZero();
      adam.step();
    }
    CHECK((w.values() == 0.7).all());
  }
  SUBCASE("first step on w squared") {
    auto w = Tensor<double>::parameter({1}, 1.0);
    ParameterSet<double> set;
    set.add_weight("w", w, 1);
    Adam<double> adam(set);
    backward(sum(multiply(w, w)));
    CHECK(w.grad()[0] == 2.0);
    adam.step();
    // m = 0.2 and v = 0.004 debias to 2 and 4, so the step is lr * 2 / (2 + eps).
    const double expected = 1.0 - 1e-3 * 2.0 / (2.0 + 1e-8);
    CHECK(std::abs(w[0] - expected) < 1e-15);
    CHECK(w[0] * w[0] < 1.0);
  }
  SUBCASE("mismatched shapes are rejected") {
    Tensor<double>::Array value = Tensor<double>::Array::Zero(3);
    Tensor<double>::Array grad = Tensor<double>::Array::Zero(2);
    AdamMoments<double> m{Tensor<double>::Array::Zero(3), Tensor<double>::Array::Zero(3)};
    CHECK_THROWS_AS(adam_update<double>(value, grad, m, 1, AdamOptions{}), std::invalid_argument);
    CHECK_THROWS_AS(adam_update<double>(value, value, m, 0, AdamOptions{}), std::invalid_argument);
  }
}

TEST_CASE("checkpoints round-trip byte for byte and forward bit for bit") {
  const auto samples = make_dataset(VocabSpec{}, 4, 9);
  auto net = make_net<float>(5);
  Adam<float> adam(net.parameters());
  TrainConfig config = tiny_config(3);
  train_network(net, adam, samples, {}, config, 0);

  const Checkpoint ckpt = capture(net, 3, &adam);
  const std::string bytes = ckpt.encode();
  CHECK(bytes.substr(0, 4) == "ACNV");
  CHECK(Checkpoint::decode(bytes).encode() == bytes);

  TempDir dir("acnv_ckpt_test");
  ckpt.save(dir / "model.ckpt");
  CHECK_FALSE(fs::exists(dir / "model.ckpt.tmp"));
  const Checkpoint loaded = Checkpoint::load(dir / "model.ckpt");
  CHECK(loaded.encode() == bytes);
  CHECK(loaded.step == 3);
  REQUIRE(loaded.optimizer.has_value());
  CHECK(loaded.optimizer->steps == 3);

  auto copy = make_net<float>(99);
  Adam<float> copy_adam(copy.parameters());
  restore(loaded, copy, &copy_adam);
  CHECK(capture(copy, 3, &copy_adam).encode() == bytes);
  const Tensor<float> probe = to_tensor<float>(image_pointers(samples));
  const auto a = net.forward(probe, Mode::kInfer).logits;
  const auto b = copy.forward(probe, Mode::kInfer).logits;
  CHECK((a.values() == b.values()).all());

  std::string wrong_version = bytes;
  wrong_version[4] = char(kCheckpointVersion + 1);
  CHECK_THROWS_WITH_AS(Checkpoint::decode(wrong_version), doctest::Contains("version"), std::runtime_error);
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(Checkpoint::decode(wrong_magic), std::runtime_error);
  CHECK_THROWS_AS(Checkpoint::decode(bytes + "x"), std::runtime_error);
  CHECK_THROWS_AS(Checkpoint::decode(bytes.substr(0, bytes.size() / 2)), std::runtime_error);

  ArchitectureDescriptor other = tiny_architecture();
  other.top_channels = 16;
  auto mismatched = make_net<float>(1, other);
  CHECK_THROWS_WITH_AS(restore(loaded, mismatched), doctest::Contains("architecture"), std::runtime_error);
  CHECK_THROWS_AS(Checkpoint::load(dir / "absent.ckpt"), std::runtime_error);
}

TEST_CASE("training is deterministic for fixed seeds") {
  const TrainResult a = train(tiny_config(6));
  const TrainResult b = train(tiny_config(6));
  REQUIRE(a.losses.size() == 6);
  CHECK(a.losses == b.losses);
  TrainConfig reseeded = tiny_config(6);
  reseeded.seed = 2;
  CHECK(train(reseeded).losses != a.losses);
}

TEST_CASE("resuming continues the step count and the loss curve") {
  TempDir dir("acnv_resume_test");
  TrainConfig full = tiny_config(6);
  full.eval_every = 2;
  const TrainResult straight = train(full);

  TrainConfig first = tiny_config(4);
  first.eval_every = 2;
  first.checkpoint_path = dir / "model.ckpt";
  first.metrics_path = dir / "metrics.tsv";
  const TrainResult head = train(first);
  CHECK(head.step == 4);
  CHECK(Checkpoint::load(dir / "model.ckpt").step == 4);

  TrainConfig second = first;
  second.steps = 6;
  second.resume_path = dir / "model.ckpt";
  const TrainResult tail = train(second);
  CHECK(tail.step == 6);
  REQUIRE(tail.losses.size() == 2);
  CHECK(tail.losses[0] == straight.losses[4]);
  CHECK(tail.losses[1] == straight.losses[5]);
  REQUIRE(tail.history.size() == 1);
  CHECK(tail.history[0].step == 6);

  std::ifstream metrics(dir / "metrics.tsv");
  std::vector<std::int64_t> steps;
  for (std::string line; std::getline(metrics, line);) steps.push_back(std::stoll(line));
  CHECK(steps == std::vector<std::int64_t>{2, 4, 6});
}

TEST_CASE("the loss log records every step") {
  TempDir dir("acnv_loss_log_test");
  TrainConfig c = tiny_config(5);
  c.loss_log_path = dir / "loss.tsv";
  const TrainResult r = train(c);
  std::ifstream in(dir / "loss.tsv");
  std::vector<double> logged;
  std::int64_t expected_step = 1;
  for (std::string line; std::getline(in, line); ++expected_step) {
    const auto tab = line.find('\t');
    REQUIRE(tab != std::string::npos);
    CHECK(std::stoll(line.substr(0, tab)) == expected_step);
    logged.push_back(std::stod(line.substr(tab + 1)));
  }
  CHECK(logged == r.losses);
}

TEST_CASE("evaluation") {
  auto net = make_net<float>(2);
  const auto samples = make_dataset(VocabSpec{}, 6, 4);
  Adam<float> adam(net.parameters());
  train_network(net, adam, samples, {}, tiny_config(1), 0);
  CHECK_THROWS_AS(evaluate(net, std::vector<Sample>{}), std::invalid_argument);
  const auto short_labels = make_dataset(VocabSpec{VocabMode::kDigits, 1, 2, {}}, 3, 4);
  CHECK_THROWS_AS(evaluate(net, short_labels), std::invalid_argument);

  auto mixed = samples;
  mixed.push_back(short_labels[0]);
  const EvalReport first = evaluate(net, mixed);
  const EvalReport second = evaluate(net, mixed);
  CHECK(first.evaluated == 6);
  CHECK(first.excluded == 1);
  CHECK(first.correct == second.correct);
  REQUIRE(first.predictions.size() == 6);
  for (size_t i = 0; i < 6; ++i) CHECK(first.predictions[i].lexicon_free == second.predictions[i].lexicon_free);

  std::vector<LabelSequence> truth;
  for (const auto& s : samples) truth.push_back(s.label);
  const Lexicon lexicon(truth);
  const EvalReport with = evaluate(net, samples, &lexicon);
  REQUIRE(with.lexicon_accuracy.has_value());
  CHECK(*with.lexicon_accuracy >= with.accuracy);
  for (const auto& p : with.predictions) {
    REQUIRE(p.lexicon_based.has_value());
    CHECK(std::find(truth.begin(), truth.end(), *p.lexicon_based) != truth.end());
  }

  const Lexicon no_words;
  CHECK_THROWS_AS(evaluate(net, samples, &no_words), std::invalid_argument);
  Index empty = 0;
  for (const auto& p : first.predictions) empty += p.lexicon_free.empty() ? 1 : 0;
  CHECK(first.empty_predictions == empty);

  Checkpoint ckpt = capture(net, 0);
  ckpt.architecture.num_classes = 11;
  CHECK_THROWS_WITH_AS(evaluate(ckpt, samples), doctest::Contains("11"), std::invalid_argument);
}

TEST_CASE("the network can memorize 32 samples") {
  ArchitectureDescriptor arch = tiny_architecture();
  arch.stem_channels = 8;
  arch.dense.growth_rate = 6;
  arch.top_channels = 32;
  TrainConfig c;
  c.architecture = arch;
  c.train_data.count = 32;
  c.test_data = c.train_data;
  c.batch_size = 8;
  c.steps = 2000;
  c.adam.learning_rate = 3e-3;
  c.eval_every = 50;
  c.checkpoint_every = 0;
  c.target_accuracy = 1.0;
  const TrainResult r = train(c);
  REQUIRE_FALSE(r.history.empty());
  CHECK(r.history.back().seq_acc == 1.0);
  CHECK(r.reached_target);
}

}  // namespace
}  // namespace acnv
