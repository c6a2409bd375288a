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

// Label-synchronous joint CTC/attention beam search. Every candidate
// prefix is scored
//   joint = lambda * log psi_ctc(prefix) + (1 - lambda) * log p_att(prefix)
// where psi_ctc is the CTC prefix probability (the full-sequence CTC
// probability once eos is appended). Hypotheses end on eos or when the
// length limit forces eos.

#include <algorithm>
#include <limits>
#include <map>
#include <vector>

#include "mvlip/attention.hpp"
#include "mvlip/common.hpp"
#include "mvlip/ctc.hpp"

namespace mvlip {

struct DecodeConfig {
  int beam_width = 5;
  double ctc_weight = 0.3;  // lambda
  int max_len = -1;         // labels before eos is forced; -1 means T

  void validate() const {
    if (beam_width < 1) fail("beam width must be at least 1");
    if (!(ctc_weight >= 0 && ctc_weight <= 1)) fail("ctc weight must lie in [0,1]");
  }
};

inline double joint_score(double lambda, double ctc_logp, double att_logp) {
  // explicit endpoints keep 0 * -inf out of the sum
  if (lambda <= 0) return att_logp;
  if (lambda >= 1) return ctc_logp;
  return lambda * ctc_logp + (1 - lambda) * att_logp;
}

/// Result of one attention decoder step for a hypothesis.
template <class State>
struct AttentionStep {
  std::vector<double> logp;  // over the full vocabulary
  State next;
  StepAttention attention;
};

template <class State>
struct Hypothesis {
  LabelIds labels;
  double att_logp = 0;
  double ctc_prefix_logp = 0;
  double joint = 0;
  bool ended = false;
  State att_state{};
  typename CtcPrefixScorer<double>::State ctc_state;
  std::vector<StepAttention> trace;  // one entry per emitted label
};

/// Ranking used for pruning and for the final choice: higher joint, then
/// higher attention score, then lexicographically smaller label ids.
template <class H>
bool hypothesis_before(const H& a, const H& b) {
  if (a.joint != b.joint) return a.joint > b.joint;
  if (a.att_logp != b.att_logp) return a.att_logp > b.att_logp;
  if (a.labels != b.labels) return a.labels < b.labels;
  return a.ended && !b.ended;
}

template <class State>
struct BeamSearchResult {
  Hypothesis<State> best;
  std::vector<Hypothesis<State>> ended;  // all completed hypotheses, best first
};

namespace detail {

/// Step results shared by the passes of one search, keyed by label prefix.
template <class State>
struct SearchCache {
  std::map<LabelIds, AttentionStep<State>> att;
  std::map<LabelIds, std::pair<double, CtcPrefixScorer<double>::State>> ctc;
};

template <class Scorer, class State>
BeamSearchResult<State> beam_pass(const CtcPrefixScorer<double>& prefix, Scorer& scorer, int width, int max_len,
                                  double lambda, int V, SearchCache<State>& cache) {
  using Hyp = Hypothesis<State>;
  const int eos = V - 1;
  Hyp root;
  root.att_state = scorer.initial_state();
  root.ctc_state = prefix.initial();
  std::vector<Hyp> live{std::move(root)};
  BeamSearchResult<State> result;

  struct Candidate {
    size_t parent;
    int label;
    LabelIds labels;
    double att_logp, ctc_prefix_logp, joint;
    bool ended;
  };

  for (int i = 0; i <= max_len && !live.empty(); ++i) {
    std::vector<const AttentionStep<State>*> steps;
    steps.reserve(live.size());
    std::vector<Candidate> cands;
    for (size_t h = 0; h < live.size(); ++h) {
      const Hyp& hyp = live[h];
      auto it = cache.att.find(hyp.labels);
      if (it == cache.att.end())
        it = cache.att.emplace(hyp.labels, scorer.step(hyp.att_state, hyp.labels.empty() ? eos : hyp.labels.back()))
                 .first;
      steps.push_back(&it->second);
      const auto& logp = it->second.logp;
      if (int(logp.size()) != V) fail("attention scorer returned ", logp.size(), " scores for ", V, " labels");
      for (int c = 1; c < V; ++c) {
        if (i == max_len && c != eos) continue;
        Candidate cand{h, c, hyp.labels, hyp.att_logp + logp[c], 0, 0, c == eos};
        if (c == eos) {
          cand.ctc_prefix_logp = prefix.final_score(hyp.ctc_state);
        } else {
          cand.labels.push_back(c);
          auto e = cache.ctc.find(cand.labels);
          if (e == cache.ctc.end()) e = cache.ctc.emplace(cand.labels, prefix.extend(hyp.ctc_state, c)).first;
          cand.ctc_prefix_logp = e->second.first;
        }
        cand.joint = joint_score(lambda, cand.ctc_prefix_logp, cand.att_logp);
        cands.push_back(std::move(cand));
      }
    }
    std::vector<size_t> order(cands.size());
    for (size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return hypothesis_before(cands[a], cands[b]); });
    if (order.size() > size_t(width)) order.resize(size_t(width));

    std::vector<Hyp> next;
    for (size_t k : order) {
      auto& c = cands[k];
      const Hyp& parent = live[c.parent];
      Hyp h;
      h.labels = std::move(c.labels);
      h.att_logp = c.att_logp;
      h.ctc_prefix_logp = c.ctc_prefix_logp;
      h.joint = c.joint;
      h.ended = c.ended;
      h.trace = parent.trace;
      if (c.ended) {
        result.ended.push_back(std::move(h));
      } else {
        h.att_state = steps[c.parent]->next;
        h.ctc_state = cache.ctc.at(h.labels).second;
        h.trace.push_back(steps[c.parent]->attention);
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  return result;
}

}  // namespace detail

/// `scorer` must provide `State initial_state()` and
/// `AttentionStep<State> step(const State&, int prev_label)`, and a step must
/// depend on the label prefix only. Label ids: blank = 0, eos = vocab - 1
/// (also used as sos).
///
/// Runs label-synchronous passes with widths 1..beam_width (attention and
/// prefix scores are computed once per distinct prefix) and returns the best
/// completed hypothesis over all passes, so widening the beam never lowers
/// the returned joint score.
template <class Scorer>
auto joint_beam_search(const Matrix<double>& ctc_logp, Scorer& scorer, const DecodeConfig& cfg) {
  using State = decltype(scorer.initial_state());
  using Hyp = Hypothesis<State>;
  cfg.validate();
  const int T = int(ctc_logp.rows()), V = int(ctc_logp.cols());
  if (T == 0) fail("joint beam search over an empty encoder output");
  const int max_len = cfg.max_len < 0 ? T : cfg.max_len;
  CtcPrefixScorer<double> prefix(ctc_logp, 0, V - 1);
  detail::SearchCache<State> cache;
  BeamSearchResult<State> result;
  std::map<LabelIds, size_t> seen;
  for (int w = 1; w <= cfg.beam_width; ++w) {
    auto pass = detail::beam_pass(prefix, scorer, w, max_len, cfg.ctc_weight, V, cache);
    for (auto& h : pass.ended) {
      auto it = seen.find(h.labels);
      if (it == seen.end()) {
        seen.emplace(h.labels, result.ended.size());
        result.ended.push_back(std::move(h));
      }
    }
  }
  if (result.ended.empty()) fail("beam search finished without a complete hypothesis");
  std::sort(result.ended.begin(), result.ended.end(), [](const Hyp& a, const Hyp& b) { return hypothesis_before(a, b); });
  result.best = result.ended.front();
  return result;
}

}  // namespace mvlip
