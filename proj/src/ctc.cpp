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

#include "acnv/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace acnv {

namespace {

template <typename Scalar>
constexpr Scalar kNegInf = -std::numeric_limits<Scalar>::infinity();

template <typename Scalar>
Scalar log_add(Scalar a, Scalar b) {
  if (a == kNegInf<Scalar>) return b;
  if (b == kNegInf<Scalar>) return a;
  const Scalar hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Blank-augmented label: blank, l1, blank, l2, ..., blank.
std::vector<int> augment(const LabelSequence& label, int blank) {
  std::vector<int> ext(2 * label.size() + 1, blank);
  for (size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label[i];
  return ext;
}

void check_label_range(const LabelSequence& label, Index num_classes) {
  for (int s : label.symbols()) {
    if (s < 0 || s >= num_classes - 1) {
      throw std::invalid_argument("ctc: label symbol " + std::to_string(s) + " outside [0, " +
                                  std::to_string(num_classes - 1) + ")");
    }
  }
}

// log alpha_t(s): all path prefixes ending in augmented state s at frame t.
template <typename Scalar>
ProbMatrix<Scalar> forward_variables(const ProbMatrix<Scalar>& lp, const std::vector<int>& ext) {
  const Index frames = lp.rows();
  const Index states = Index(ext.size());
  ProbMatrix<Scalar> alpha = ProbMatrix<Scalar>::Constant(frames, states, kNegInf<Scalar>);
  if (frames == 0) return alpha;
  alpha(0, 0) = lp(0, ext[0]);
  if (states > 1) alpha(0, 1) = lp(0, ext[1]);
  for (Index t = 1; t < frames; ++t) {
    for (Index s = 0; s < states; ++s) {
      Scalar acc = alpha(t - 1, s);
      if (s >= 1) acc = log_add(acc, alpha(t - 1, s - 1));
      if (s >= 2 && ext[s] != ext[s - 2]) acc = log_add(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc == kNegInf<Scalar> ? acc : acc + lp(t, ext[s]);
    }
  }
  return alpha;
}

// log beta_t(s): all path suffixes after frame t given state s at frame t.
template <typename Scalar>
ProbMatrix<Scalar> backward_variables(const ProbMatrix<Scalar>& lp, const std::vector<int>& ext) {
  const Index frames = lp.rows();
  const Index states = Index(ext.size());
  ProbMatrix<Scalar> beta = ProbMatrix<Scalar>::Constant(frames, states, kNegInf<Scalar>);
  beta(frames - 1, states - 1) = 0;
  if (states > 1) beta(frames - 1, states - 2) = 0;
  for (Index t = frames - 2; t >= 0; --t) {
    for (Index s = 0; s < states; ++s) {
      Scalar acc = beta(t + 1, s) + lp(t + 1, ext[s]);
      if (s + 1 < states) acc = log_add(acc, beta(t + 1, s + 1) + lp(t + 1, ext[s + 1]));
      if (s + 2 < states && ext[s + 2] != ext[s]) {
        acc = log_add(acc, beta(t + 1, s + 2) + lp(t + 1, ext[s + 2]));
      }
      beta(t, s) = acc;
    }
  }
  return beta;
}

template <typename Scalar>
Scalar final_log_likelihood(const ProbMatrix<Scalar>& alpha) {
  const Index last = alpha.rows() - 1;
  const Index states = alpha.cols();
  Scalar ll = alpha(last, states - 1);
  if (states > 1) ll = log_add(ll, alpha(last, states - 2));
  return ll;
}

template <typename Scalar>
ProbMatrix<Scalar> log_softmax_rows(const ProbMatrix<Scalar>& logits) {
  ProbMatrix<Scalar> out(logits.rows(), logits.cols());
  for (Index t = 0; t < logits.rows(); ++t) {
    const Scalar m = logits.row(t).maxCoeff();
    const Scalar lse = m + std::log((logits.row(t).array() - m).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

void enumerate_guard(Index classes, Index frames) {
  double count = 1;
  for (Index t = 0; t < frames; ++t) count *= double(classes);
  if (count > 1e7) {
    throw std::invalid_argument("ctc brute force: " + std::to_string(classes) + "^" +
                                std::to_string(frames) + " paths exceeds the 1e7 limit");
  }
}

// Calls fn(path) for every path over `classes` classes of length `frames`.
template <typename Fn>
void for_each_path(Index classes, Index frames, Fn&& fn) {
  Path path(frames, 0);
  while (true) {
    fn(path);
    Index t = frames - 1;
    while (t >= 0 && path[t] == classes - 1) path[t--] = 0;
    if (t < 0) return;
    ++path[t];
  }
}

}  // namespace

LabelSequence collapse(const Path& path, int blank) {
  std::vector<int> out;
  int previous = -1;
  for (int c : path) {
    if (c != previous && c != blank) out.push_back(c);
    previous = c;
  }
  return LabelSequence(std::move(out));
}

Path path_from_string(std::string_view text, int blank) {
  Path path;
  for (char c : text) {
    if (c == '-') {
      path.push_back(blank);
      continue;
    }
    auto idx = symbol_index(c);
    if (!idx) throw std::invalid_argument(std::string("path: bad character '") + c + "'");
    path.push_back(*idx);
  }
  return path;
}

template <typename Scalar>
Scalar path_probability(const ProbMatrix<Scalar>& y, const Path& path) {
  if (Index(path.size()) != y.rows()) {
    throw std::invalid_argument("path_probability: path length " + std::to_string(path.size()) +
                                " != sequence length " + std::to_string(y.rows()));
  }
  Scalar p = 1;
  for (size_t t = 0; t < path.size(); ++t) {
    if (path[t] < 0 || path[t] >= y.cols()) throw std::invalid_argument("path_probability: bad class");
    p *= y(Index(t), path[t]);
  }
  return p;
}

template <typename Scalar>
Scalar label_probability_bruteforce(const ProbMatrix<Scalar>& y, const LabelSequence& label) {
  enumerate_guard(y.cols(), y.rows());
  const int blank = int(y.cols()) - 1;
  Scalar total = 0;
  for_each_path(y.cols(), y.rows(), [&](const Path& path) {
    if (collapse(path, blank) == label) total += path_probability(y, path);
  });
  return total;
}

template <typename Scalar>
std::map<LabelSequence, Scalar> label_distribution_bruteforce(const ProbMatrix<Scalar>& y) {
  enumerate_guard(y.cols(), y.rows());
  const int blank = int(y.cols()) - 1;
  std::map<LabelSequence, Scalar> out;
  for_each_path(y.cols(), y.rows(), [&](const Path& path) {
    out[collapse(path, blank)] += path_probability(y, path);
  });
  return out;
}

Index ctc_min_frames(const LabelSequence& label) {
  Index n = Index(label.size());
  for (size_t i = 1; i < label.size(); ++i) n += label[i] == label[i - 1] ? 1 : 0;
  return n;
}

template <typename Scalar>
Scalar ctc_log_likelihood(const ProbMatrix<Scalar>& log_probs, const LabelSequence& label) {
  check_label_range(label, log_probs.cols());
  if (log_probs.rows() == 0) return label.empty() ? Scalar(0) : kNegInf<Scalar>;
  if (ctc_min_frames(label) > log_probs.rows()) return kNegInf<Scalar>;
  const auto ext = augment(label, int(log_probs.cols()) - 1);
  return final_log_likelihood(forward_variables(log_probs, ext));
}

template <typename Scalar>
Scalar label_probability(const ProbMatrix<Scalar>& y, const LabelSequence& label) {
  ProbMatrix<Scalar> lp = y.array().log().matrix();
  return std::exp(ctc_log_likelihood(lp, label));
}

template <typename Scalar>
CtcItemResult<Scalar> ctc_forward_backward(const ProbMatrix<Scalar>& logits,
                                           const LabelSequence& label) {
  if (!logits.allFinite()) throw std::invalid_argument("ctc_loss: non-finite scores");
  check_label_range(label, logits.cols());
  const Index frames = logits.rows();
  if (label.empty()) throw std::invalid_argument("ctc_loss: empty target");
  if (ctc_min_frames(label) > frames) {
    throw std::invalid_argument("ctc_loss: target \"" + label.to_string() + "\" needs " +
                                std::to_string(ctc_min_frames(label)) + " frames but only " +
                                std::to_string(frames) + " available");
  }
  const ProbMatrix<Scalar> lp = log_softmax_rows(logits);
  const auto ext = augment(label, int(logits.cols()) - 1);
  const auto alpha = forward_variables(lp, ext);
  const auto beta = backward_variables(lp, ext);
  const Scalar ll = final_log_likelihood(alpha);

  // d(-log p)/d logit_tk = softmax_tk - posterior occupancy of class k at t.
  ProbMatrix<Scalar> grad = lp.array().exp().matrix();
  ProbMatrix<Scalar> occupancy =
      ProbMatrix<Scalar>::Constant(frames, logits.cols(), kNegInf<Scalar>);
  for (Index t = 0; t < frames; ++t) {
    for (size_t s = 0; s < ext.size(); ++s) {
      occupancy(t, ext[s]) = log_add(occupancy(t, ext[s]), alpha(t, Index(s)) + beta(t, Index(s)));
    }
  }
  grad.array() -= (occupancy.array() - ll).exp();
  return {-ll, std::move(grad)};
}

template <typename Scalar>
Tensor<Scalar> ctc_loss(const Tensor<Scalar>& logits, const std::vector<LabelSequence>& targets) {
  using Node = detail::Node<Scalar>;
  if (logits.ndim() != 3) {
    throw std::invalid_argument("ctc_loss: expected [B, W, K] scores, got " +
                                to_string(logits.shape()));
  }
  const Index batch = logits.dim(0), frames = logits.dim(1), classes = logits.dim(2);
  if (Index(targets.size()) != batch) {
    throw std::invalid_argument("ctc_loss: " + std::to_string(targets.size()) + " targets for batch " +
                                std::to_string(batch));
  }
  typename Node::Array grads(logits.size());
  Scalar total = 0;
  for (Index b = 0; b < batch; ++b) {
    ProbMatrix<Scalar> item =
        Eigen::Map<const ProbMatrix<Scalar>>(logits.data() + b * frames * classes, frames, classes);
    CtcItemResult<Scalar> r;
    try {
      r = ctc_forward_backward(item, targets[b]);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(std::string(e.what()) + " (batch item " + std::to_string(b) + ")");
    }
    total += r.loss;
    Eigen::Map<ProbMatrix<Scalar>>(grads.data() + b * frames * classes, frames, classes) =
        r.grad_logits;
  }
  typename Node::Array value(1);
  value[0] = total;
  auto in_node = logits.node();
  return detail::make_result<Scalar>(
      {1}, std::move(value), {logits},
      [in_node, grads = std::move(grads)](Node& self) { in_node->accumulate(grads * self.grad[0]); });
}

template <typename Scalar>
Path best_path(const ProbMatrix<Scalar>& y) {
  Path path(y.rows());
  for (Index t = 0; t < y.rows(); ++t) {
    Index best = 0;
    for (Index k = 1; k < y.cols(); ++k) {
      if (y(t, k) > y(t, best)) best = k;
    }
    path[t] = int(best);
  }
  return path;
}

template <typename Scalar>
LabelSequence best_path_decode(const ProbMatrix<Scalar>& y) {
  return collapse(best_path(y), int(y.cols()) - 1);
}

Index edit_distance(const LabelSequence& a, const LabelSequence& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<Index> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = Index(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = Index(i);
    for (size_t j = 1; j <= m; ++j) {
      const Index sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

Lexicon Lexicon::from_strings(const std::vector<std::string>& words) {
  std::vector<LabelSequence> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(LabelSequence::from_string(w));
  return Lexicon(std::move(out));
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read lexicon " + path);
  std::vector<LabelSequence> words;
  std::vector<size_t> bad;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) {
      line.pop_back();
    }
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    std::string word = line.substr(start);
    if (!is_alphanumeric(word)) {
      bad.push_back(line_no);
      continue;
    }
    words.push_back(LabelSequence::from_string(word));
  }
  if (!bad.empty()) {
    std::string msg = "lexicon " + path + ": non-alphanumeric entries on line(s)";
    for (size_t i = 0; i < bad.size(); ++i) msg += (i ? ", " : " ") + std::to_string(bad[i]);
    throw std::invalid_argument(msg);
  }
  return Lexicon(std::move(words));
}

template <typename Scalar>
LabelSequence lexicon_decode(const ProbMatrix<Scalar>& y, const Lexicon& lexicon) {
  if (lexicon.empty()) throw std::invalid_argument("lexicon_decode: empty lexicon");
  const LabelSequence predicted = best_path_decode(y);
  Index best_distance = std::numeric_limits<Index>::max();
  std::vector<const LabelSequence*> candidates;
  for (const auto& word : lexicon.words()) {
    const Index d = edit_distance(predicted, word);
    if (d < best_distance) {
      best_distance = d;
      candidates.clear();
    }
    if (d == best_distance) candidates.push_back(&word);
  }
  if (candidates.size() == 1) return *candidates.front();

  const ProbMatrix<Scalar> lp = y.array().log().matrix();
  const LabelSequence* best = nullptr;
  Scalar best_ll = kNegInf<Scalar>;
  for (const LabelSequence* word : candidates) {
    const Scalar ll = ctc_log_likelihood(lp, *word);
    if (best == nullptr || ll > best_ll || (ll == best_ll && *word < *best)) {
      best = word;
      best_ll = ll;
    }
  }
  return *best;
}

#define ACNV_INSTANTIATE_CTC(S)                                                               \
  template S path_probability(const ProbMatrix<S>&, const Path&);                             \
  template S label_probability_bruteforce(const ProbMatrix<S>&, const LabelSequence&);        \
  template std::map<LabelSequence, S> label_distribution_bruteforce(const ProbMatrix<S>&);    \
  template S ctc_log_likelihood(const ProbMatrix<S>&, const LabelSequence&);                  \
  template S label_probability(const ProbMatrix<S>&, const LabelSequence&);                   \
  template CtcItemResult<S> ctc_forward_backward(const ProbMatrix<S>&, const LabelSequence&);  \
  template Tensor<S> ctc_loss(const Tensor<S>&, const std::vector<LabelSequence>&);           \
  template Path best_path(const ProbMatrix<S>&);                                              \
  template LabelSequence best_path_decode(const ProbMatrix<S>&);                              \
  template LabelSequence lexicon_decode(const ProbMatrix<S>&, const Lexicon&);

ACNV_INSTANTIATE_CTC(float)
ACNV_INSTANTIATE_CTC(double)

#undef ACNV_INSTANTIATE_CTC

}  // namespace acnv
