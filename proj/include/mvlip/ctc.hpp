// Copyright 2026 The mvlip Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

// CTC forward-backward over per-frame log posteriors, and the label
// synchronous prefix scorer used by joint CTC/attention decoding.

#include <limits>
#include <utility>
#include <vector>

#include "mvlip/common.hpp"
#include "mvlip/vocab.hpp"

namespace mvlip {

/// Minimum number of frames needed to emit `target` (one per label plus one
/// blank between every pair of equal neighbours).
inline int ctc_min_frames(const LabelIds& target) {
  int n = int(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

template <class S>
struct CtcResult {
  S loss = 0;               // -log p_ctc(target | x); +inf when infeasible
  bool feasible = true;
  Matrix<S> occupancy;      // T x V posterior label occupancy (empty if infeasible)
};

/// Forward-backward in log space. `logp` is T x V with rows that are log
/// distributions. The gradient of the loss with respect to `logp` is
/// -occupancy.
template <class S>
CtcResult<S> ctc_forward_backward(const Matrix<S>& logp, const LabelIds& target, int blank = 0) {
  const int T = int(logp.rows()), V = int(logp.cols());
  for (int l : target) {
    if (l == blank) fail("ctc target contains the blank label");
    if (l < 0 || l >= V) fail("ctc target label ", l, " out of range");
  }
  CtcResult<S> res;
  if (T == 0 || ctc_min_frames(target) > T) {
    res.loss = std::numeric_limits<S>::infinity();
    res.feasible = false;
    return res;
  }
  const int L = int(target.size()), Sx = 2 * L + 1;
  auto lab = [&](int s) { return s % 2 == 0 ? blank : target[(s - 1) / 2]; };
  auto skip_ok = [&](int s) { return s >= 2 && lab(s) != blank && lab(s) != lab(s - 2); };

  Matrix<S> alpha = Matrix<S>::Constant(T, Sx, kNegInf<S>);
  Matrix<S> beta = Matrix<S>::Constant(T, Sx, kNegInf<S>);
  alpha(0, 0) = logp(0, blank);
  if (Sx > 1) alpha(0, 1) = logp(0, lab(1));
  for (int t = 1; t < T; ++t)
    for (int s = 0; s < Sx; ++s) {
      S a = alpha(t - 1, s);
      if (s >= 1) a = log_add(a, alpha(t - 1, s - 1));
      if (skip_ok(s)) a = log_add(a, alpha(t - 1, s - 2));
      alpha(t, s) = a == kNegInf<S> ? a : a + logp(t, lab(s));
    }
  S logP = alpha(T - 1, Sx - 1);
  if (Sx > 1) logP = log_add(logP, alpha(T - 1, Sx - 2));

  beta(T - 1, Sx - 1) = 0;
  if (Sx > 1) beta(T - 1, Sx - 2) = 0;
  for (int t = T - 2; t >= 0; --t)
    for (int s = 0; s < Sx; ++s) {
      S b = beta(t + 1, s) + logp(t + 1, lab(s));
      if (s + 1 < Sx) b = log_add(b, beta(t + 1, s + 1) + logp(t + 1, lab(s + 1)));
      if (s + 2 < Sx && skip_ok(s + 2)) b = log_add(b, beta(t + 1, s + 2) + logp(t + 1, lab(s + 2)));
      beta(t, s) = b;
    }

  res.loss = -logP;
  if (logP == kNegInf<S>) {
    res.feasible = false;
    res.loss = std::numeric_limits<S>::infinity();
    return res;
  }
  res.occupancy = Matrix<S>::Zero(T, V);
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < Sx; ++s) {
      S v = alpha(t, s) + beta(t, s);
      if (v != kNegInf<S>) res.occupancy(t, lab(s)) += std::exp(v - logP);
    }
  return res;
}

template <class S>
S ctc_loss(const Matrix<S>& logp, const LabelIds& target, int blank = 0) {
  return ctc_forward_backward(logp, target, blank).loss;
}

/// Prefix probabilities p(g... | x) for label-synchronous search.
template <class S>
class CtcPrefixScorer {
 public:
  struct State {
    std::vector<S> r_n, r_b;  // log prob of g ending at t in a label / in a blank
    int last = -1;            // last label of g, -1 for the empty prefix
    int length = 0;
    S prefix_score = 0;       // log psi(g); 0 for the empty prefix
  };

  CtcPrefixScorer(const Matrix<S>& logp, int blank, int eos) : logp_(logp), blank_(blank), eos_(eos) {
    if (logp_.rows() == 0) fail("ctc prefix scorer needs at least one frame");
  }

  int frames() const { return int(logp_.rows()); }

  State initial() const {
    State s;
    const int T = frames();
    s.r_n.assign(T, kNegInf<S>);
    s.r_b.resize(T);
    S acc = 0;
    for (int t = 0; t < T; ++t) s.r_b[t] = acc += logp_(t, blank_);
    return s;
  }

  /// log p_ctc(g | x), the probability that the whole output is exactly g.
  S final_score(const State& g) const { return log_add(g.r_n.back(), g.r_b.back()); }

  /// Score of g followed by c. For c == eos this is final_score(g) and the
  /// returned state is a copy of g.
  std::pair<S, State> extend(const State& g, int c) const {
    if (c == eos_) return {final_score(g), g};
    if (c == blank_) fail("cannot extend a prefix with blank");
    const int T = frames();
    State h;
    h.last = c;
    h.length = g.length + 1;
    h.r_n.assign(T, kNegInf<S>);
    h.r_b.assign(T, kNegInf<S>);
    auto phi = [&](int t) { return c == g.last ? g.r_b[t] : log_add(g.r_b[t], g.r_n[t]); };
    h.r_n[0] = g.length == 0 ? logp_(0, c) : kNegInf<S>;
    S psi = h.r_n[0];
    for (int t = 1; t < T; ++t) {
      const S ph = phi(t - 1);
      h.r_n[t] = log_add(h.r_n[t - 1], ph) + logp_(t, c);
      h.r_b[t] = log_add(h.r_b[t - 1], h.r_n[t - 1]) + logp_(t, blank_);
      psi = log_add(psi, ph + logp_(t, c));
    }
    h.prefix_score = psi;
    return {psi, std::move(h)};
  }

 private:
  const Matrix<S>& logp_;
  int blank_, eos_;
};

}  // namespace mvlip
