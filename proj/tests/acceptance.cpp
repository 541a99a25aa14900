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

// Acceptance suite: one PASS or FAIL line per criterion. Criteria backed by
// long training runs read the artifacts that scripts/toy_experiment.sh and
// scripts/ablation.sh leave under runs/ (or $ACNV_RUNS_DIR) and fail when
// those are missing.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acnv/checkpoint.hpp"
#include "acnv/ctc.hpp"
#include "acnv/model.hpp"
#include "acnv/trainer.hpp"
#include "support/gradcheck.hpp"

namespace acnv {
namespace {

namespace fs = std::filesystem;
using testing::GradCheckReport;
using testing::gradcheck;
using testing::random_tensor;
using T = Tensor<double>;
using Inputs = std::vector<T>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

fs::path runs_dir() {
  if (const char* env = std::getenv("ACNV_RUNS_DIR")) return env;
  return ACNV_RUNS_DIR;
}

std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path.string());
  std::map<std::string, std::string> out;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

ProbMatrix<double> random_distribution(Index frames, Index classes, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 2.0);
  ProbMatrix<double> y(frames, classes);
  for (Index t = 0; t < frames; ++t) {
    for (Index k = 0; k < classes; ++k) y(t, k) = std::exp(n(rng));
    y.row(t) /= y.row(t).sum();
  }
  return y;
}

LabelSequence random_label(Index max_len, Index symbols, std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> len(0, max_len);
  std::uniform_int_distribution<int> sym(0, int(symbols) - 1);
  std::vector<int> s(size_t(len(rng)));
  for (auto& v : s) v = sym(rng);
  return LabelSequence(std::move(s));
}

Outcome ctc_oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<Index> frames(1, 8), classes(2, 4);
  double worst = 0;
  const int instances = 200;
  for (int i = 0; i < instances; ++i) {
    const Index w = frames(rng), k = classes(rng);
    const auto y = random_distribution(w, k, rng);
    const LabelSequence l = random_label(std::min<Index>(w, 4), k - 1, rng);
    worst = std::max(worst, std::abs(label_probability(y, l) - label_probability_bruteforce(y, l)));
  }
  const double elapsed = seconds_since(start);
  return {worst < 1e-9 && elapsed < 60.0, std::to_string(instances) + " instances, max |dp - brute| " +
                                              fmt(worst) + ", " + fmt(elapsed) + " s"};
}

Outcome ctc_normalization() {
  std::mt19937_64 rng(102);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const Index w = 1 + i % 8, k = 2 + i % 3;
    const auto y = random_distribution(w, k, rng);
    // Every label of at most w symbols, the empty one included.
    std::vector<LabelSequence> labels{LabelSequence()};
    for (size_t j = 0; j < labels.size(); ++j) {
      if (Index(labels[j].size()) == w) continue;
      for (int s = 0; s < k - 1; ++s) {
        auto v = labels[j].symbols();
        v.push_back(s);
        labels.emplace_back(std::move(v));
      }
    }
    double total = 0;
    for (const auto& l : labels) total += label_probability(y, l);
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return {worst < 1e-9, "50 instances, max |sum - 1| " + fmt(worst)};
}

template <typename Layer>
void init_layer(Layer& layer, std::uint64_t seed) {
  ParameterSet<double> set;
  layer.collect(set, "layer");
  initialize(set, seed);
}

ArchitectureDescriptor tiny_architecture() {
  ArchitectureDescriptor a;
  a.stem_channels = 4;
  a.dense = DenseBlockConfig{1, 2, 3};
  a.attention_stages = {1, 1};
  a.top_channels = 8;
  a.sequence_layers = 2;
  return a;
}

struct GradCase {
  std::string name;
  double tolerance;
  std::function<GradCheckReport(std::mt19937_64&, std::uint64_t)> run;
};

std::vector<GradCase> gradient_cases() {
  const double op = 1e-4, bn = 1e-3;
  auto simple = [](testing::Graph g, std::function<Inputs(std::mt19937_64&)> make) {
    return [g, make](std::mt19937_64& rng, std::uint64_t seed) { return gradcheck(g, make(rng), seed); };
  };
  std::vector<GradCase> cases;
  cases.push_back({"conv2d", op, [](std::mt19937_64& rng, std::uint64_t seed) {
                     std::uniform_int_distribution<Index> pad(0, 2), stride(1, 2), kernel(1, 3);
                     const Index kh = kernel(rng), kw = kernel(rng);
                     Conv2dOptions o{stride(rng), stride(rng), {pad(rng), pad(rng), pad(rng), pad(rng)}};
                     return gradcheck([o](const Inputs& in) { return conv2d(in[0], in[1], in[2], o); },
                                      {random_tensor({2, 2, 5, 6}, rng), random_tensor({3, 2, kh, kw}, rng),
                                       random_tensor({3}, rng)},
                                      seed);
                   }});
  cases.push_back({"max_pool", op, simple([](const Inputs& in) { return pool2d(in[0], PoolKind::kMax, {}); },
                                          [](auto& rng) { return Inputs{random_tensor({2, 2, 4, 6}, rng)}; })});
  cases.push_back({"average_pool", op,
                   simple([](const Inputs& in) {
                            return pool2d(in[0], PoolKind::kAverage, {2, 2, 2, 1, {0, 0, 0, 1}});
                          },
                          [](auto& rng) { return Inputs{random_tensor({2, 3, 4, 5}, rng)}; })});
  cases.push_back({"bilinear_upsample", op, [](std::mt19937_64& rng, std::uint64_t seed) {
                     std::uniform_int_distribution<Index> extra(0, 4);
                     const Index oh = 3 + extra(rng), ow = 4 + extra(rng);
                     return gradcheck([oh, ow](const Inputs& in) { return bilinear_upsample(in[0], oh, ow); },
                                      {random_tensor({2, 2, 3, 4}, rng)}, seed);
                   }});
  cases.push_back({"batchnorm_train", bn, [](std::mt19937_64& rng, std::uint64_t seed) {
                     auto state = std::make_shared<BatchNormState<double>>(3);
                     return gradcheck(
                         [state](const Inputs& in) { return batchnorm(in[0], in[1], in[2], *state, Mode::kTrain); },
                         {random_tensor({2, 3, 3, 3}, rng), random_tensor({3}, rng, 0.5, 1.5),
                          random_tensor({3}, rng)},
                         seed);
                   }});
  cases.push_back({"batchnorm_infer", op, [](std::mt19937_64& rng, std::uint64_t seed) {
                     auto state = std::make_shared<BatchNormState<double>>(3);
                     batchnorm(random_tensor({4, 3, 3, 3}, rng), T({3}, 1.0), T({3}, 0.0), *state, Mode::kTrain);
                     return gradcheck(
                         [state](const Inputs& in) { return batchnorm(in[0], in[1], in[2], *state, Mode::kInfer); },
                         {random_tensor({2, 3, 3, 3}, rng), random_tensor({3}, rng), random_tensor({3}, rng)},
                         seed);
                   }});
  auto pair = [](auto& rng) { return Inputs{random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 3, 2, 2}, rng)}; };
  auto one = [](auto& rng) { return Inputs{random_tensor({2, 3, 2, 2}, rng)}; };
  cases.push_back({"relu", op, simple([](const Inputs& in) { return relu(in[0]); }, one)});
  cases.push_back({"sigmoid", op, simple([](const Inputs& in) { return sigmoid(in[0]); }, one)});
  cases.push_back({"add", op, simple([](const Inputs& in) { return add(in[0], in[1]); }, pair)});
  cases.push_back({"multiply", op, simple([](const Inputs& in) { return multiply(in[0], in[1]); }, pair)});
  cases.push_back({"scale", op, simple([](const Inputs& in) { return scale(in[0], -1.7); }, one)});
  cases.push_back({"sum", op, simple([](const Inputs& in) { return sum(in[0]); }, one)});
  cases.push_back({"concat_channels", op,
                   simple([](const Inputs& in) { return concat_channels(in); },
                          [](auto& rng) { return Inputs{random_tensor({2, 3, 2, 2}, rng), random_tensor({2, 1, 2, 2}, rng)}; })});
  cases.push_back({"row_softmax", op,
                   simple([](const Inputs& in) { return row_softmax(in[0]); },
                          [](auto& rng) { return Inputs{random_tensor({4, 7}, rng, -3, 3)}; })});
  cases.push_back({"matmul_affine", op,
                   simple([](const Inputs& in) { return matmul_affine(in[0], in[1], in[2]); },
                          [](auto& rng) {
                            return Inputs{random_tensor({4, 8}, rng), random_tensor({8, 5}, rng), random_tensor({5}, rng)};
                          })});
  cases.push_back({"reshape", op, simple([](const Inputs& in) { return reshape(in[0], {6, 4}); }, one)});
  cases.push_back({"columns_to_frames", op,
                   simple([](const Inputs& in) { return columns_to_frames(in[0]); },
                          [](auto& rng) { return Inputs{random_tensor({2, 3, 2, 4}, rng)}; })});
  cases.push_back({"frames_to_columns", op,
                   simple([](const Inputs& in) { return frames_to_columns(in[0]); },
                          [](auto& rng) { return Inputs{random_tensor({2, 4, 5}, rng)}; })});
  cases.push_back({"project_logits", op,
                   simple([](const Inputs& in) { return project_logits(FeatureSequence<double>{in[0]}, in[1], in[2]); },
                          [](auto& rng) {
                            return Inputs{random_tensor({2, 5, 6}, rng), random_tensor({6, 4}, rng), random_tensor({4}, rng)};
                          })});
  cases.push_back({"ctc_loss", op, [](std::mt19937_64& rng, std::uint64_t seed) {
                     std::vector<LabelSequence> targets;
                     while (targets.size() < 2) {
                       LabelSequence l = random_label(3, 2, rng);
                       if (!l.empty()) targets.push_back(l);
                     }
                     return gradcheck([targets](const Inputs& in) { return ctc_loss(in[0], targets); },
                                      {random_tensor({2, 5, 3}, rng, -2, 2)}, seed);
                   }});
  cases.push_back({"conv_bn_relu", bn, [](std::mt19937_64& rng, std::uint64_t seed) {
                     auto state = std::make_shared<BatchNormState<double>>(3);
                     return gradcheck(
                         [state](const Inputs& in) {
                           return conv_bn_relu(in[0], in[1], in[2], in[3], *state, {1, 1, Padding2d::uniform(1)},
                                               Mode::kTrain);
                         },
                         {random_tensor({2, 2, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
                          random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)},
                         seed);
                   }});
  cases.push_back({"dense_block", bn, [](std::mt19937_64& rng, std::uint64_t seed) {
                     auto block = std::make_shared<DenseBlock<double>>(2, DenseBlockConfig{2, 2, 3});
                     init_layer(*block, seed);
                     return gradcheck([block](const Inputs& in) { return (*block)(in[0], Mode::kTrain); },
                                      {random_tensor({2, 2, 4, 4}, rng), block->layers()[1].weight()}, seed);
                   }});
  cases.push_back({"residual_attention", bn, [](std::mt19937_64& rng, std::uint64_t seed) {
                     auto module = std::make_shared<ResidualAttention<double>>(2, AttentionModuleConfig{2, 1, true});
                     init_layer(*module, seed);
                     return gradcheck([module](const Inputs& in) { return (*module)(in[0], Mode::kTrain).output; },
                                      {random_tensor({2, 2, 8, 8}, rng), module->mask_weight(), module->mask_bias()},
                                      seed);
                   }});
  cases.push_back({"conv_sequence_model", bn, [](std::mt19937_64& rng, std::uint64_t seed) {
                     auto model = std::make_shared<ConvSequenceModel<double>>(2, 3);
                     ParameterSet<double> set;
                     model->collect(set, "sequence");
                     initialize(set, seed);
                     return gradcheck([model](const Inputs& in) { return (*model)(in[0], Mode::kTrain).frames; },
                                      {random_tensor({2, 1, 8, 6}, rng), model->layers()[0].weight()}, seed);
                   }});
  cases.push_back({"end_to_end_loss", bn, [](std::mt19937_64& rng, std::uint64_t seed) {
                     auto net = std::make_shared<AttentionConvNet<double>>(tiny_architecture());
                     auto params = net->parameters();
                     initialize(params, seed);
                     const T images = random_tensor({2, 1, 32, 100}, rng);
                     const std::vector<LabelSequence> targets{LabelSequence::from_string("4a7"),
                                                              LabelSequence::from_string("zz")};
                     Inputs probed;
                     for (const auto& p : params.tensors) {
                       if (p.fan_in > 0 || p.name == "classifier.bias") probed.push_back(p.tensor);
                     }
                     probed.push_back(images);
                     return gradcheck(
                         [net, images, targets](const Inputs&) {
                           return ctc_loss(net->forward(images, Mode::kTrain).logits, targets);
                         },
                         probed, seed, 1e-6, 3);
                   }});
  return cases;
}

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  const int instances = 20;
  bool pass = true;
  std::string worst_name, failures;
  double worst_ratio = 0;
  Index probes = 0;
  std::mt19937_64 rng(103);
  const auto cases = gradient_cases();
  for (const auto& c : cases) {
    double case_worst = 0;
    for (int i = 0; i < instances; ++i) {
      const GradCheckReport r = c.run(rng, std::uint64_t(i));
      case_worst = std::max(case_worst, r.max_error);
      probes += r.probes;
    }
    if (case_worst >= c.tolerance) {
      pass = false;
      failures += " " + c.name + "=" + fmt(case_worst);
    }
    if (case_worst / c.tolerance > worst_ratio) {
      worst_ratio = case_worst / c.tolerance;
      worst_name = c.name + " " + fmt(case_worst) + " (limit " + fmt(c.tolerance) + ")";
    }
  }
  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 300.0;
  return {pass, std::to_string(cases.size()) + " operations x " + std::to_string(instances) + " instances, " +
                    std::to_string(probes) + " probes, closest to limit: " + worst_name + ", " + fmt(elapsed) +
                    " s" + (failures.empty() ? "" : "; over limit:" + failures)};
}

Outcome shape_pipeline() {
  ArchitectureDescriptor arch;
  std::vector<Index> dense;
  Index top = 0;
  for (const auto& row : arch.layers()) {
    if (row.layer == "Dense Block") dense.push_back(row.output[0]);
    if (row.module == "Encoder") top = row.output[0];
  }
  AttentionConvNet<double> net(arch);
  auto params = net.parameters();
  initialize(params, 104);
  std::mt19937_64 rng(104);
  const auto out = net.forward(random_tensor({2, 1, 32, 100}, rng), Mode::kTrain);
  const auto& probs = out.distribution.probs;
  double worst = 0;
  for (Index row = 0; row < probs.dim(0) * probs.dim(1); ++row) {
    worst = std::max(worst, std::abs(probs.values().segment(row * probs.dim(2), probs.dim(2)).sum() - 1.0));
  }
  const bool pass = arch.stem_channels == 36 && arch.dense.growth_rate == 18 &&
                    dense == std::vector<Index>{108, 180, 252} && top == 512 &&
                    probs.shape() == Shape{2, 25, 37} && worst < 1e-6;
  std::string channels = "36";
  for (Index c : dense) channels += "->" + std::to_string(c);
  channels += "->" + std::to_string(top);
  return {pass, "channels " + channels + ", output " + to_string(probs.shape()) + ", max |row sum - 1| " + fmt(worst)};
}

Index observed_reach(Index kernel, Index t, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ConvSequenceModel<double> model(4, kernel);
  ParameterSet<double> set;
  model.collect(set, "sequence");
  initialize(set, seed);
  model(random_tensor({4, 1, 64, 25}, rng), Mode::kTrain);
  Index reach = -1;
  NoGradGuard no_grad;
  for (int draw = 0; draw < 10; ++draw) {
    T x = random_tensor({1, 1, 64, 25}, rng);
    T y = x.detach();
    for (Index r = 0; r < 64; ++r) y[r * 25 + t] += 5.0 * (1 + draw);
    const auto a = model(x, Mode::kInfer), b = model(y, Mode::kInfer);
    for (Index f = 0; f < 25; ++f) {
      if ((a.frames.values().segment(f * a.dim(), a.dim()) != b.frames.values().segment(f * b.dim(), b.dim())).any()) {
        reach = std::max(reach, std::abs(f - t));
      }
    }
  }
  return reach;
}

Outcome receptive_field() {
  const Index k3 = observed_reach(3, 12, 105), k5 = observed_reach(5, 12, 106);
  return {k3 == 4 && k5 == 8, "kernel 3: +-" + std::to_string(k3) + " (" + std::to_string(2 * k3 + 1) +
                                  " frames), kernel 5: +-" + std::to_string(k5) + " (" +
                                  std::to_string(2 * k5 + 1) + " frames)"};
}

Outcome attention_identity() {
  std::mt19937_64 rng(107);
  double worst = 0, max_attention = 0;
  for (int trial = 0; trial < 10; ++trial) {
    ResidualAttention<double> module(8, AttentionModuleConfig{3, 1, true});
    init_layer(module, 107 + std::uint64_t(trial));
    module.mask_bias().values().setConstant(-40.0);
    const auto out = module(random_tensor({2, 8, 16, 50}, rng), Mode::kTrain);
    const double scale = std::max(1e-12, out.feature.values().abs().maxCoeff());
    worst = std::max(worst, (out.output.values() - out.feature.values()).abs().maxCoeff() / scale);
    max_attention = std::max(max_attention, out.attention.values().maxCoeff());
  }
  return {worst < 1e-5, "max A " + fmt(max_attention) + ", max |out - F| / max |F| " + fmt(worst)};
}

Outcome toy_end_to_end() {
  const fs::path dir = runs_dir() / "toy";
  if (!fs::exists(dir / "model.ckpt")) {
    return {false, "no artifacts in " + dir.string() + "; run scripts/toy_experiment.sh"};
  }
  const auto timing = read_key_values(dir / "timing.txt");
  const double train_seconds = std::stod(timing.at("train_seconds"));
  const Checkpoint ckpt = Checkpoint::load((dir / "model.ckpt").string());

  DatasetSpec test;
  test.vocab = VocabSpec{VocabMode::kDigits, 3, 5, {}};
  test.count = 1000;
  test.seed = 2;
  SyntheticDataset ds(test);
  std::vector<Sample> samples;
  std::set<LabelSequence> words;
  for (Index i = 0; i < ds.size(); ++i) {
    samples.push_back(ds.sample(i));
    words.insert(samples.back().label);
  }
  const Lexicon lexicon(std::vector<LabelSequence>(words.begin(), words.end()));
  const EvalReport r = evaluate(ckpt, samples, &lexicon);
  const bool pass = r.accuracy >= 0.9 && *r.lexicon_accuracy >= r.accuracy && train_seconds <= 1800;
  return {pass, "step " + std::to_string(ckpt.step) + ", lexicon-free " + fmt(r.accuracy) + ", lexicon " +
                    fmt(*r.lexicon_accuracy) + " on " + std::to_string(r.evaluated) + " test images, trained in " +
                    fmt(train_seconds) + " s on this machine"};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome attention_ablation() {
  const fs::path dir = runs_dir() / "ablation";
  std::ifstream in(dir / "summary.tsv");
  if (!in) return {false, "no artifacts in " + dir.string() + "; run scripts/ablation.sh"};
  std::vector<double> with, without;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string attention, seed, accuracy;
    if (!std::getline(row, attention, '\t') || !std::getline(row, seed, '\t') || !std::getline(row, accuracy)) continue;
    (attention == "true" ? with : without).push_back(std::stod(accuracy));
  }
  if (with.size() < 3 || without.size() < 3) {
    return {false, "incomplete ablation: " + std::to_string(with.size()) + " attention and " +
                       std::to_string(without.size()) + " ablated runs"};
  }
  std::string budget;
  if (fs::exists(dir / "budget.txt")) budget = read_key_values(dir / "budget.txt")["steps"] + " steps each, ";
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (double x : v) s += (s.empty() ? "" : "/") + fmt(x);
    return s;
  };
  const double a = median(with), b = median(without);
  return {a >= b, budget + "median accuracy with attention " + fmt(a) + " (" + list(with) + ") vs A:=0 " + fmt(b) +
                      " (" + list(without) + ")"};
}

Outcome benchmark_linearity() {
  ConvSequenceModel<float> model(4, 3);
  ParameterSet<float> set;
  model.collect(set, "sequence");
  initialize(set, 108);
  std::mt19937_64 rng(108);
  std::normal_distribution<float> normal;
  std::map<Index, double> per_frame;
  for (Index w : {25, 50, 100}) {
    Tensor<float> x({1, 1, 2048, w});
    for (Index i = 0; i < x.size(); ++i) x[i] = normal(rng);
    NoGradGuard no_grad;
    model(x, Mode::kTrain);
    for (int warm = 0; warm < 3; ++warm) model(x, Mode::kInfer);
    const int repeats = 30;
    double total = 0;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      model(x, Mode::kInfer);
      total += seconds_since(t0) * 1e3;
    }
    per_frame[w] = total / repeats / double(w);
  }
  const double r25 = per_frame[25] / per_frame[100], r50 = per_frame[50] / per_frame[100];
  auto within = [](double r) { return r >= 0.7 && r <= 1.3; };
  return {within(r25) && within(r50), "per-frame ms at W=25/50/100: " + fmt(per_frame[25]) + "/" + fmt(per_frame[50]) +
                                          "/" + fmt(per_frame[100]) + ", ratios to W=100: " + fmt(r25) + ", " + fmt(r50)};
}

Outcome checkpoint_round_trip() {
  const auto samples = make_dataset(VocabSpec{}, 4, 109);
  std::vector<const GrayImage*> images;
  for (const auto& s : samples) images.push_back(&s.image);
  const Tensor<float> probe = to_tensor<float>(images);

  AttentionConvNet<float> net;
  auto params = net.parameters();
  initialize(params, 109);
  Adam<float> adam(params);
  TrainConfig config;
  config.batch_size = 4;
  config.steps = 1;
  config.eval_every = 0;
  config.checkpoint_every = 0;
  train_network(net, adam, samples, {}, config, 0);

  const fs::path path = fs::temp_directory_path() / "acnv_acceptance.ckpt";
  const Checkpoint saved = capture(net, 1, &adam);
  saved.save(path.string());
  const Checkpoint loaded = Checkpoint::load(path.string());
  fs::remove(path);

  AttentionConvNet<float> copy;
  auto copy_params = copy.parameters();
  initialize(copy_params, 110);
  Adam<float> copy_adam(copy_params);
  restore(loaded, copy, &copy_adam);
  NoGradGuard no_grad;
  const auto a = net.forward(probe, Mode::kInfer).logits;
  const auto b = copy.forward(probe, Mode::kInfer).logits;
  const bool identical = (a.values() == b.values()).all();
  const bool bytes = capture(copy, 1, &copy_adam).encode() == saved.encode();
  return {identical && bytes, std::string("forward on ") + std::to_string(samples.size()) + " images " +
                                  (identical ? "bit-identical" : "differs") + ", re-encoded checkpoint " +
                                  (bytes ? "byte-identical" : "differs")};
}

}  // namespace
}  // namespace acnv

int main(int argc, char** argv) {
  using acnv::Outcome;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"ctc-oracle-equivalence", acnv::ctc_oracle_equivalence},
      {"ctc-normalization", acnv::ctc_normalization},
      {"gradient-suite", acnv::gradient_suite},
      {"shape-pipeline", acnv::shape_pipeline},
      {"receptive-field", acnv::receptive_field},
      {"attention-identity", acnv::attention_identity},
      {"toy-end-to-end", acnv::toy_end_to_end},
      {"attention-ablation", acnv::attention_ablation},
      {"benchmark-linearity", acnv::benchmark_linearity},
      {"checkpoint-round-trip", acnv::checkpoint_round_trip},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    if (!only.empty() && !only.count(name)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
