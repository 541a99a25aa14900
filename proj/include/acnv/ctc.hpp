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

// Connectionist temporal classification over per-frame class distributions.
//
// A distribution sequence for one item is a W x K row-major matrix whose
// rows sum to one; the blank is always the last class (K - 1). Labels use
// classes 0..K-2.

#ifndef ACNV_CTC_HPP_
#define ACNV_CTC_HPP_

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "acnv/labels.hpp"
#include "acnv/tensor.hpp"

namespace acnv {

template <typename Scalar>
using ProbMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One class per frame, blanks included.
using Path = std::vector<int>;

/// Merges runs of equal classes, then drops blanks.
LabelSequence collapse(const Path& path, int blank);

/// '-' is the blank, every other character maps through the alphabet.
Path path_from_string(std::string_view text, int blank = kBlank);

/// Product of the per-frame probabilities of `path`.
template <typename Scalar>
Scalar path_probability(const ProbMatrix<Scalar>& y, const Path& path);

/// Sum of path_probability over every path that collapses to `label`, by
/// exhaustive enumeration. Rejects instances with more than 1e7 paths.
template <typename Scalar>
Scalar label_probability_bruteforce(const ProbMatrix<Scalar>& y, const LabelSequence& label);

/// Exhaustive p(l|y) for every reachable label, the empty one included.
template <typename Scalar>
std::map<LabelSequence, Scalar> label_distribution_bruteforce(const ProbMatrix<Scalar>& y);

/// Minimum frame count a label needs: one per symbol plus a separating blank
/// between equal neighbours.
Index ctc_min_frames(const LabelSequence& label);

/// log p(l|y) by the forward recursion over log-probabilities; -inf when
/// the label cannot be emitted in W frames.
template <typename Scalar>
Scalar ctc_log_likelihood(const ProbMatrix<Scalar>& log_probs, const LabelSequence& label);

/// p(l|y) from probabilities via the log-space forward recursion.
template <typename Scalar>
Scalar label_probability(const ProbMatrix<Scalar>& y, const LabelSequence& label);

/// Per-item negative log-likelihood and its gradient with respect to the
/// pre-softmax scores.
template <typename Scalar>
struct CtcItemResult {
  Scalar loss;
  ProbMatrix<Scalar> grad_logits;
};

/// Log-space forward-backward for one item given W x K pre-softmax scores.
template <typename Scalar>
CtcItemResult<Scalar> ctc_forward_backward(const ProbMatrix<Scalar>& logits,
                                           const LabelSequence& label);

/// Sum over the batch of -log p(target_b | softmax(logits_b)) for [B, W, K]
/// scores, differentiable with respect to `logits`. Infeasible targets and
/// non-finite scores throw.
template <typename Scalar>
Tensor<Scalar> ctc_loss(const Tensor<Scalar>& logits, const std::vector<LabelSequence>& targets);

/// Per-frame argmax (lowest index on ties), then collapse.
template <typename Scalar>
LabelSequence best_path_decode(const ProbMatrix<Scalar>& y);

/// Per-frame argmax classes, lowest index on ties.
template <typename Scalar>
Path best_path(const ProbMatrix<Scalar>& y);

/// Levenshtein distance with unit insert, delete and substitute costs.
Index edit_distance(const LabelSequence& a, const LabelSequence& b);

class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::vector<LabelSequence> words) : words_(std::move(words)) {}

  /// Case-folds every entry; throws on any non-alphanumeric entry.
  static Lexicon from_strings(const std::vector<std::string>& words);
  /// One word per line; blank lines are skipped. Bad lines are reported
  /// together with their line numbers.
  static Lexicon load(const std::string& path);

  const std::vector<LabelSequence>& words() const { return words_; }
  bool empty() const { return words_.empty(); }
  size_t size() const { return words_.size(); }

 private:
  std::vector<LabelSequence> words_;
};

/// Best-path prediction snapped to the lexicon word at minimum edit distance.
/// Ties go to the higher p(word|y), then to the lexicographically smaller.
template <typename Scalar>
LabelSequence lexicon_decode(const ProbMatrix<Scalar>& y, const Lexicon& lexicon);

}  // namespace acnv

#endif  // ACNV_CTC_HPP_
