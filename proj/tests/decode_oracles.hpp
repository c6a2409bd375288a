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

// Scripted attention scorer and exhaustive joint-decoding oracle.

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "mvlip/beam_search.hpp"
#include "oracles.hpp"

namespace decode_oracle {

using namespace mvlip;

/// Attention scorer whose next-label distribution is a fixed pseudo-random
/// function of the prefix.
struct TableScorer {
  using State = LabelIds;
  int V;
  uint64_t seed;
  double sharp = 2.0;

  std::vector<double> dist(const LabelIds& prefix) const {
    uint64_t h = seed;
    for (int l : prefix) h = h * 1000003u + uint64_t(l) + 1;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> n(0, sharp);
    std::vector<double> lp(V);
    double mx = -1e300;
    for (auto& x : lp) mx = std::max(mx, x = n(rng));
    double z = 0;
    for (double x : lp) z += std::exp(x - mx);
    for (auto& x : lp) x -= mx + std::log(z);
    return lp;
  }

  State initial_state() const { return {}; }
  AttentionStep<State> step(const State& s, int prev) const {
    AttentionStep<State> out;
    out.next = s;
    if (prev != V - 1) out.next.push_back(prev);
    out.logp = dist(out.next);
    out.attention.view = {1.0};
    out.attention.temporal = {{1.0}};
    return out;
  }
  /// log p_att(y + eos)
  double sequence_logp(const LabelIds& y) const {
    double s = 0;
    LabelIds pre;
    for (int l : y) {
      s += dist(pre)[l];
      pre.push_back(l);
    }
    return s + dist(pre)[V - 1];
  }
};

struct Enumerated {
  LabelIds labels;
  double joint;
};

/// Exhaustive search over every label sequence of length <= max_len using
/// brute force CTC path sums and the scripted attention model.
inline Enumerated enumerate_best(const std::vector<std::vector<double>>& probs, const TableScorer& att, double lambda,
                          int max_len) {
  const int V = att.V;  // labels 1..V-2 are real, V-1 is eos
  Enumerated best{{}, -std::numeric_limits<double>::infinity()};
  bool have = false;
  std::function<void(LabelIds&)> rec = [&](LabelIds& y) {
    // ctc posteriors have V columns (eos column is never emitted by paths that collapse to y)
    const double pc = oracle::ctc_path_sum(probs, y);
    const double lc = pc > 0 ? std::log(pc) : -std::numeric_limits<double>::infinity();
    const double la = att.sequence_logp(y);
    const double j = joint_score(lambda, lc, la);
    auto better = [&] {
      if (!have) return true;
      if (j != best.joint) return j > best.joint;
      return false;
    };
    if (better()) {
      best = {y, j};
      have = true;
    }
    if (int(y.size()) == max_len) return;
    for (int c = 1; c < V - 1; ++c) {
      y.push_back(c);
      rec(y);
      y.pop_back();
    }
  };
  LabelIds y;
  rec(y);
  return best;
}

inline Matrix<double> to_log(const std::vector<std::vector<double>>& p) {
  Matrix<double> m(p.size(), p[0].size());
  for (size_t t = 0; t < p.size(); ++t)
    for (size_t v = 0; v < p[t].size(); ++v) m(t, v) = std::log(p[t][v]);
  return m;
}

/// Posteriors with an (almost) silent eos column, as produced by a trained
/// CTC head.
inline std::vector<std::vector<double>> posteriors(int T, int V, std::mt19937_64& rng) {
  auto p = oracle::random_posteriors(T, V, rng);
  for (auto& row : p) {
    row[V - 1] *= 1e-3;
    double s = 0;
    for (double x : row) s += x;
    for (auto& x : row) x /= s;
  }
  return p;
}

}  // namespace decode_oracle
