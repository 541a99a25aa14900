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

// Training loop, evaluation and single-image prediction.

#ifndef ACNV_TRAINER_HPP_
#define ACNV_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "acnv/checkpoint.hpp"
#include "acnv/config.hpp"
#include "acnv/ctc.hpp"
#include "acnv/data.hpp"

namespace acnv {

struct TrainConfig {
  DatasetSpec train_data{.count = 20000, .seed = 1};
  DatasetSpec test_data{.count = 1000, .seed = 2};
  ArchitectureDescriptor architecture;
  Index batch_size = 64;
  Index steps = 2000;
  AdamOptions adam;
  double clip = 5.0;
  std::uint64_t seed = 1;       // initialization and shuffling
  Index eval_every = 500;
  Index eval_limit = 0;         // test samples per periodic evaluation, 0 = all
  Index checkpoint_every = 500;
  double target_accuracy = 0;   // stop once a periodic evaluation reaches it, 0 = never
  double time_limit = 0;        // seconds, 0 = unlimited
  std::string checkpoint_path;  // empty = no checkpoints
  std::string metrics_path;     // empty = no metrics log
  std::string loss_log_path;    // "step<TAB>loss" after every step, empty = none
  std::string resume_path;      // checkpoint to continue from

  /// Keys: vocab, words, words_file, min_length, max_length, noise,
  /// salt_pepper, gradient, train_count, train_seed, test_count, test_seed,
  /// batch_size, steps, learning_rate, clip, seed, eval_every, eval_limit,
  /// checkpoint_every, target_accuracy, time_limit, checkpoint, metrics,
  /// loss_log, resume, attention. ACNV_SEED replaces seed and train_seed and sets
  /// test_seed to one more.
  static TrainConfig from_config(const KeyValues& kv);
  KeyValues to_config() const;
};

struct MetricsRow {
  std::int64_t step = 0;
  double loss = 0;      // mean training loss since the previous row
  double seq_acc = 0;   // lexicon-free sequence accuracy on the evaluation set
};

struct TrainResult {
  std::int64_t step = 0;
  std::vector<double> losses;  // one per step run in this call
  std::vector<MetricsRow> history;
  Index skipped_samples = 0;
  bool reached_target = false;
  bool timed_out = false;
};

using MetricsCallback = std::function<void(const MetricsRow&)>;

/// forward -> ctc loss (batch mean) -> backward -> clip -> Adam. Throws on a
/// non-finite loss; the last written checkpoint is left in place.
TrainResult train(const TrainConfig& config, const MetricsCallback& on_metrics = {});

/// Same loop over caller-provided data and network; used by train().
template <typename Scalar>
TrainResult train_network(AttentionConvNet<Scalar>& net, Adam<Scalar>& optimizer,
                          const std::vector<Sample>& train_set, const std::vector<Sample>& eval_set,
                          const TrainConfig& config, std::int64_t start_step,
                          const MetricsCallback& on_metrics = {});

struct Prediction {
  LabelSequence truth;
  LabelSequence lexicon_free;
  std::optional<LabelSequence> lexicon_based;
};

struct EvalReport {
  Index evaluated = 0;  // samples passing the evaluation filter
  Index excluded = 0;
  Index correct = 0;
  Index empty_predictions = 0;  // lexicon-free outputs with no symbol
  double accuracy = 0;
  std::optional<Index> lexicon_correct;
  std::optional<double> lexicon_accuracy;
  std::vector<Prediction> predictions;
};

/// Infer-mode accuracy over samples passing evaluation_filter. An empty
/// evaluation set throws.
template <typename Scalar>
EvalReport evaluate(AttentionConvNet<Scalar>& net, const std::vector<Sample>& samples,
                    const Lexicon* lexicon = nullptr, Index batch_size = 64);

/// Rebuilds the network from `checkpoint`; rejects a class count the
/// decoder does not know.
EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<Sample>& samples,
                    const Lexicon* lexicon = nullptr, Index batch_size = 64);

/// Builds a float network from a checkpoint, rejecting unknown class counts.
AttentionConvNet<float> load_network(const Checkpoint& checkpoint);

struct Decoded {
  Path frames;  // per-frame argmax, blank included
  LabelSequence lexicon_free;
  std::optional<LabelSequence> lexicon_based;
};

template <typename Scalar>
Decoded decode_image(AttentionConvNet<Scalar>& net, const GrayImage& image,
                     const Lexicon* lexicon = nullptr);

}  // namespace acnv

#endif  // ACNV_TRAINER_HPP_
