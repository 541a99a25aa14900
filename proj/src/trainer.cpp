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

#include "acnv/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace acnv {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ull;

// Sample order for each epoch, derived from (seed, epoch) only so a resumed
// run replays the same batches.
class BatchSchedule {
 public:
  BatchSchedule(Index dataset_size, std::uint64_t seed) : n_(dataset_size), seed_(seed) {}

  std::vector<Index> batch(std::int64_t step, Index batch_size) {
    std::vector<Index> out;
    out.reserve(size_t(batch_size));
    const std::int64_t first = step * batch_size;
    for (std::int64_t pos = first; pos < first + batch_size; ++pos) {
      const std::int64_t epoch = pos / n_;
      if (epoch != epoch_) reshuffle(epoch);
      out.push_back(order_[size_t(pos % n_)]);
    }
    return out;
  }

 private:
  void reshuffle(std::int64_t epoch) {
    order_.resize(size_t(n_));
    std::iota(order_.begin(), order_.end(), Index(0));
    std::mt19937_64 rng(mix_seed(seed_, kShuffleStream, std::uint64_t(epoch)));
    std::shuffle(order_.begin(), order_.end(), rng);
    epoch_ = epoch;
  }

  Index n_;
  std::uint64_t seed_;
  std::int64_t epoch_ = -1;
  std::vector<Index> order_;
};

void append_metrics(const std::string& path, const MetricsRow& row) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to metrics log " + path);
  out << row.step << '\t' << format_double(row.loss) << '\t' << format_double(row.seq_acc) << '\n';
}

std::vector<Sample> materialize(const DatasetSpec& spec) {
  SyntheticDataset ds(spec);
  std::vector<Sample> out;
  out.reserve(size_t(ds.size()));
  for (Index i = 0; i < ds.size(); ++i) out.push_back(ds.sample(i));
  return out;
}

}  // namespace

TrainConfig TrainConfig::from_config(const KeyValues& kv) {
  kv.require_known({"vocab", "words", "words_file", "min_length", "max_length", "noise",
                    "salt_pepper", "gradient", "train_count", "train_seed", "test_count",
                    "test_seed", "batch_size", "steps", "learning_rate", "clip", "seed",
                    "eval_every", "eval_limit", "checkpoint_every", "target_accuracy",
                    "time_limit", "checkpoint", "metrics", "loss_log", "resume", "attention"});
  KeyValues data;
  for (const char* key : {"vocab", "words", "words_file", "min_length", "max_length", "noise",
                          "salt_pepper", "gradient"}) {
    if (kv.contains(key)) data.set(key, kv.get_string(key, ""));
  }
  TrainConfig c;
  data.set("count", std::to_string(kv.get_int("train_count", c.train_data.count)));
  data.set("seed", std::to_string(kv.get_uint("train_seed", c.train_data.seed)));
  c.train_data = DatasetSpec::from_config(data);
  data.set("count", std::to_string(kv.get_int("test_count", c.test_data.count)));
  data.set("seed", std::to_string(kv.get_uint("test_seed", c.test_data.seed)));
  c.test_data = DatasetSpec::from_config(data);
  c.batch_size = kv.get_int("batch_size", c.batch_size);
  c.steps = kv.get_int("steps", c.steps);
  c.adam.learning_rate = kv.get_double("learning_rate", c.adam.learning_rate);
  c.clip = kv.get_double("clip", c.clip);
  c.seed = kv.get_uint("seed", c.seed);
  c.eval_every = kv.get_int("eval_every", c.eval_every);
  c.eval_limit = kv.get_int("eval_limit", c.eval_limit);
  c.checkpoint_every = kv.get_int("checkpoint_every", c.checkpoint_every);
  c.target_accuracy = kv.get_double("target_accuracy", c.target_accuracy);
  c.time_limit = kv.get_double("time_limit", c.time_limit);
  c.checkpoint_path = kv.get_string("checkpoint", "");
  c.metrics_path = kv.get_string("metrics", "");
  c.loss_log_path = kv.get_string("loss_log", "");
  c.resume_path = kv.get_string("resume", "");
  c.architecture.attention_enabled = kv.get_bool("attention", true);
  if (auto s = seed_override()) {
    c.seed = *s;
    c.train_data.seed = *s;
    c.test_data.seed = *s + 1;
  }
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (c.steps < 0) throw std::invalid_argument("steps must be >= 0");
  if (c.eval_every < 0 || c.checkpoint_every < 0 || c.eval_limit < 0) {
    throw std::invalid_argument("eval_every, eval_limit and checkpoint_every must be >= 0");
  }
  if (!(c.adam.learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(c.clip > 0)) throw std::invalid_argument("clip must be > 0");
  return c;
}

KeyValues TrainConfig::to_config() const {
  KeyValues kv = train_data.to_config();
  KeyValues out;
  for (const auto& [k, v] : kv.entries()) {
    if (k != "count" && k != "seed") out.set(k, v);
  }
  out.set("train_count", std::to_string(train_data.count));
  out.set("train_seed", std::to_string(train_data.seed));
  out.set("test_count", std::to_string(test_data.count));
  out.set("test_seed", std::to_string(test_data.seed));
  out.set("batch_size", std::to_string(batch_size));
  out.set("steps", std::to_string(steps));
  out.set("learning_rate", format_double(adam.learning_rate));
  out.set("clip", format_double(clip));
  out.set("seed", std::to_string(seed));
  out.set("eval_every", std::to_string(eval_every));
  out.set("eval_limit", std::to_string(eval_limit));
  out.set("checkpoint_every", std::to_string(checkpoint_every));
  out.set("target_accuracy", format_double(target_accuracy));
  out.set("time_limit", format_double(time_limit));
  out.set("checkpoint", checkpoint_path);
  out.set("metrics", metrics_path);
  out.set("loss_log", loss_log_path);
  out.set("resume", resume_path);
  out.set("attention", architecture.attention_enabled ? "true" : "false");
  return out;
}

template <typename Scalar>
TrainResult train_network(AttentionConvNet<Scalar>& net, Adam<Scalar>& optimizer,
                          const std::vector<Sample>& train_set, const std::vector<Sample>& eval_set,
                          const TrainConfig& config, std::int64_t start_step,
                          const MetricsCallback& on_metrics) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  const auto started = std::chrono::steady_clock::now();
  const Index frames = net.architecture().sequence_length();
  ParameterSet<Scalar> params = net.parameters();
  BatchSchedule schedule(Index(train_set.size()), config.seed);

  TrainResult result;
  result.step = start_step;
  double loss_since_eval = 0;
  Index steps_since_eval = 0;
  std::ofstream loss_log;
  if (!config.loss_log_path.empty()) {
    loss_log.open(config.loss_log_path, std::ios::app);
    if (!loss_log) throw std::runtime_error("cannot append to loss log " + config.loss_log_path);
  }

  auto checkpoint = [&] {
    if (!config.checkpoint_path.empty()) {
      capture(net, std::uint64_t(result.step), &optimizer).save(config.checkpoint_path);
    }
  };
  auto run_eval = [&] {
    MetricsRow row;
    row.step = result.step;
    row.loss = steps_since_eval ? loss_since_eval / double(steps_since_eval) : 0.0;
    if (!eval_set.empty()) row.seq_acc = evaluate(net, eval_set, nullptr, config.batch_size).accuracy;
    result.history.push_back(row);
    append_metrics(config.metrics_path, row);
    if (on_metrics) on_metrics(row);
    loss_since_eval = 0;
    steps_since_eval = 0;
    if (config.target_accuracy > 0 && row.seq_acc >= config.target_accuracy) result.reached_target = true;
  };

  while (result.step < config.steps) {
    std::vector<const GrayImage*> images;
    std::vector<LabelSequence> targets;
    for (Index i : schedule.batch(result.step, config.batch_size)) {
      const Sample& s = train_set[size_t(i)];
      if (ctc_min_frames(s.label) > frames || s.label.empty()) {
        ++result.skipped_samples;
        std::cerr << "warning: skipping sample '" << s.label.to_string() << "' that cannot be emitted in "
                  << frames << " frames\n";
        continue;
      }
      images.push_back(&s.image);
      targets.push_back(s.label);
    }
    if (images.empty()) {
      ++result.step;
      continue;
    }
    params.zero_grad();
    ForwardResult<Scalar> out = net.forward(to_tensor<Scalar>(images), Mode::kTrain);
    Tensor<Scalar> loss = scale(ctc_loss(out.logits, targets), Scalar(1) / Scalar(targets.size()));
    const double value = double(loss.item());
    if (!std::isfinite(value)) {
      throw std::runtime_error("train: loss is " + std::to_string(value) + " at step " +
                               std::to_string(result.step) + "; last checkpoint retained");
    }
    backward(loss);
    clip_gradients(params, config.clip);
    optimizer.step();
    ++result.step;
    result.losses.push_back(value);
    if (loss_log.is_open()) loss_log << result.step << '\t' << format_double(value) << '\n' << std::flush;
    loss_since_eval += value;
    ++steps_since_eval;

    const bool last = result.step == config.steps;
    if (config.eval_every > 0 && (result.step % config.eval_every == 0 || last)) run_eval();
    if (config.checkpoint_every > 0 && result.step % config.checkpoint_every == 0) checkpoint();
    if (result.reached_target) break;
    if (config.time_limit > 0) {
      const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (elapsed >= config.time_limit) {
        result.timed_out = true;
        if (config.eval_every > 0 && steps_since_eval > 0) run_eval();
        break;
      }
    }
  }
  checkpoint();
  return result;
}

TrainResult train(const TrainConfig& config, const MetricsCallback& on_metrics) {
  AttentionConvNet<float> net(config.architecture);
  ParameterSet<float> params = net.parameters();
  initialize(params, config.seed);
  Adam<float> optimizer(params, config.adam);
  std::int64_t start = 0;
  if (!config.resume_path.empty()) {
    Checkpoint c = Checkpoint::load(config.resume_path);
    if (!(c.architecture == net.architecture())) {
      throw std::runtime_error("resume: checkpoint architecture differs from the configured one");
    }
    restore(c, net, &optimizer);
    optimizer.options() = config.adam;
    start = std::int64_t(c.step);
  }
  const std::vector<Sample> train_set = materialize(config.train_data);
  std::vector<Sample> eval_set = materialize(config.test_data);
  if (config.eval_limit > 0 && Index(eval_set.size()) > config.eval_limit) {
    eval_set.resize(size_t(config.eval_limit));
  }
  return train_network(net, optimizer, train_set, eval_set, config, start, on_metrics);
}

template <typename Scalar>
EvalReport evaluate(AttentionConvNet<Scalar>& net, const std::vector<Sample>& samples,
                    const Lexicon* lexicon, Index batch_size) {
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  std::vector<const Sample*> kept;
  EvalReport report;
  for (const Sample& s : samples) {
    if (evaluation_filter(s.label)) {
      kept.push_back(&s);
    } else {
      ++report.excluded;
    }
  }
  if (kept.empty()) {
    throw std::invalid_argument("evaluate: no samples pass the evaluation filter (" +
                                std::to_string(samples.size()) + " given)");
  }
  const bool use_lexicon = lexicon != nullptr;
  if (use_lexicon && lexicon->empty()) throw std::invalid_argument("evaluate: empty lexicon");
  Index lexicon_correct = 0;
  NoGradGuard no_grad;
  for (size_t start = 0; start < kept.size(); start += size_t(batch_size)) {
    const size_t end = std::min(kept.size(), start + size_t(batch_size));
    std::vector<const GrayImage*> images;
    for (size_t i = start; i < end; ++i) images.push_back(&kept[i]->image);
    ForwardResult<Scalar> out = net.forward(to_tensor<Scalar>(images), Mode::kInfer);
    for (size_t i = start; i < end; ++i) {
      const ProbMatrix<Scalar> y = out.distribution.item(Index(i - start));
      Prediction p{kept[i]->label, best_path_decode(y), std::nullopt};
      if (p.lexicon_free == p.truth) ++report.correct;
      if (p.lexicon_free.empty()) ++report.empty_predictions;
      if (use_lexicon) {
        p.lexicon_based = lexicon_decode(y, *lexicon);
        if (*p.lexicon_based == p.truth) ++lexicon_correct;
      }
      report.predictions.push_back(std::move(p));
    }
  }
  report.evaluated = Index(kept.size());
  report.accuracy = double(report.correct) / double(report.evaluated);
  if (use_lexicon) {
    report.lexicon_correct = lexicon_correct;
    report.lexicon_accuracy = double(lexicon_correct) / double(report.evaluated);
  }
  return report;
}

AttentionConvNet<float> load_network(const Checkpoint& checkpoint) {
  if (checkpoint.architecture.num_classes != kNumClasses) {
    throw std::invalid_argument("checkpoint has " + std::to_string(checkpoint.architecture.num_classes) +
                                " classes, the decoder expects " + std::to_string(kNumClasses));
  }
  AttentionConvNet<float> net(checkpoint.architecture);
  restore(checkpoint, net);
  return net;
}

EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<Sample>& samples,
                    const Lexicon* lexicon, Index batch_size) {
  AttentionConvNet<float> net = load_network(checkpoint);
  return evaluate(net, samples, lexicon, batch_size);
}

template <typename Scalar>
Decoded decode_image(AttentionConvNet<Scalar>& net, const GrayImage& image, const Lexicon* lexicon) {
  const auto& arch = net.architecture();
  const GrayImage resized = resize(image, arch.input_height, arch.input_width);
  NoGradGuard no_grad;
  ForwardResult<Scalar> out = net.forward(to_tensor<Scalar>(resized), Mode::kInfer);
  const ProbMatrix<Scalar> y = out.distribution.item(0);
  Decoded d{best_path(y), best_path_decode(y), std::nullopt};
  if (lexicon) d.lexicon_based = lexicon_decode(y, *lexicon);
  return d;
}

template TrainResult train_network(AttentionConvNet<float>&, Adam<float>&, const std::vector<Sample>&,
                                   const std::vector<Sample>&, const TrainConfig&, std::int64_t,
                                   const MetricsCallback&);
template TrainResult train_network(AttentionConvNet<double>&, Adam<double>&, const std::vector<Sample>&,
                                   const std::vector<Sample>&, const TrainConfig&, std::int64_t,
                                   const MetricsCallback&);
template EvalReport evaluate(AttentionConvNet<float>&, const std::vector<Sample>&, const Lexicon*, Index);
template EvalReport evaluate(AttentionConvNet<double>&, const std::vector<Sample>&, const Lexicon*, Index);
template Decoded decode_image(AttentionConvNet<float>&, const GrayImage&, const Lexicon*);
template Decoded decode_image(AttentionConvNet<double>&, const GrayImage&, const Lexicon*);

}  // namespace acnv
