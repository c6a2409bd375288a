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

#include <gtest/gtest.h>

#include <map>

#include "mvlip/beam_search.hpp"
#include "mvlip/recognizer.hpp"
#include "decode_oracles.hpp"
#include "oracles.hpp"
#include "toy.hpp"

using namespace mvlip;

using namespace decode_oracle;

TEST(JointScore, LinearCombination) {
  EXPECT_DOUBLE_EQ(joint_score(0.3, -2.0, -1.0), -1.3);
  EXPECT_DOUBLE_EQ(joint_score(0.0, -std::numeric_limits<double>::infinity(), -1.0), -1.0);
  EXPECT_DOUBLE_EQ(joint_score(1.0, -2.0, -std::numeric_limits<double>::infinity()), -2.0);
  DecodeConfig bad;
  bad.beam_width = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad.beam_width = 1;
  bad.ctc_weight = 1.2;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(BeamSearch, ExhaustiveBeamMatchesEnumeration) {
  const int V = 4;  // blank, two labels, eos
  std::mt19937_64 rng(31);
  int cases = 0;
  for (double lambda : {0.0, 0.3, 1.0})
    for (int T = 1; T <= 3; ++T)
      for (int rep = 0; rep < 40; ++rep) {
        auto p = posteriors(T, V, rng);
        Matrix<double> lp = to_log(p);
        TableScorer att{V, rng()};
        DecodeConfig cfg;
        cfg.beam_width = 1000;
        cfg.ctc_weight = lambda;
        auto res = joint_beam_search(lp, att, cfg);
        auto want = enumerate_best(p, att, lambda, T);
        EXPECT_NEAR(res.best.joint, want.joint, 1e-6) << "lambda " << lambda << " T " << T;
        if (std::abs(res.best.joint - want.joint) < 1e-9) EXPECT_EQ(res.best.labels, want.labels);
        EXPECT_NEAR(res.best.joint, joint_score(lambda, res.best.ctc_prefix_logp, res.best.att_logp), 1e-12);
        ++cases;
      }
  EXPECT_EQ(cases, 360);
}

TEST(BeamSearch, EndpointsRankLikeSingleBranch) {
  const int V = 4;
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const int T = 1 + int(rep % 3);
    auto p = posteriors(T, V, rng);
    TableScorer att{V, rng()};
    DecodeConfig cfg;
    cfg.beam_width = 1000;
    cfg.ctc_weight = 1.0;
    auto ctc_only = joint_beam_search(to_log(p), att, cfg);
    // argmax of p_ctc alone
    double best = -1;
    LabelIds arg;
    std::function<void(LabelIds&)> rec = [&](LabelIds& y) {
      double pc = oracle::ctc_path_sum(p, y);
      if (pc > best) best = pc, arg = y;
      if (int(y.size()) == T) return;
      for (int c = 1; c < V - 1; ++c) y.push_back(c), rec(y), y.pop_back();
    };
    LabelIds y;
    rec(y);
    EXPECT_EQ(ctc_only.best.labels, arg);
    cfg.ctc_weight = 0.0;
    auto att_only = joint_beam_search(to_log(p), att, cfg);
    double best_att = -1e300;
    LabelIds arg_att;
    std::function<void(LabelIds&)> rec2 = [&](LabelIds& y2) {
      double s = att.sequence_logp(y2);
      if (s > best_att) best_att = s, arg_att = y2;
      if (int(y2.size()) == T) return;
      for (int c = 1; c < V - 1; ++c) y2.push_back(c), rec2(y2), y2.pop_back();
    };
    LabelIds y2;
    rec2(y2);
    EXPECT_EQ(att_only.best.labels, arg_att);
  }
}

TEST(BeamSearch, WidthOneIsGreedy) {
  const int V = 6;
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    const int T = 2 + int(rep % 5);
    auto p = posteriors(T, V, rng);
    Matrix<double> lp = to_log(p);
    TableScorer att{V, rng()};
    DecodeConfig cfg;
    cfg.beam_width = 1;
    auto res = joint_beam_search(lp, att, cfg);
    // greedy: at each step pick the best joint extension (eos included)
    CtcPrefixScorer<double> pre(lp, 0, V - 1);
    auto st = pre.initial();
    LabelIds y;
    double att_sum = 0;
    while (true) {
      auto d = att.dist(y);
      int arg = -1;
      double best = -1e300, best_att = 0;
      CtcPrefixScorer<double>::State next;
      for (int c = 1; c < V; ++c) {
        if (int(y.size()) == T && c != V - 1) continue;
        auto [psi, s2] = pre.extend(st, c);
        const double j = joint_score(cfg.ctc_weight, psi, att_sum + d[c]);
        if (j > best) best = j, arg = c, next = s2, best_att = att_sum + d[c];
      }
      att_sum = best_att;
      if (arg == V - 1) break;
      y.push_back(arg);
      st = next;
    }
    EXPECT_EQ(res.best.labels, y);
  }
}

TEST(BeamSearch, WiderBeamNeverScoresLower) {
  const int V = 6;
  std::mt19937_64 rng(23);
  int violations = 0, total = 0;
  for (int rep = 0; rep < 300; ++rep) {
    const int T = 2 + int(rep % 6);
    auto p = posteriors(T, V, rng);
    Matrix<double> lp = to_log(p);
    TableScorer att{V, rng()};
    double prev = -std::numeric_limits<double>::infinity();
    for (int w = 1; w <= 6; ++w) {
      DecodeConfig cfg;
      cfg.beam_width = w;
      auto res = joint_beam_search(lp, att, cfg);
      ++total;
      if (res.best.joint < prev - 1e-12) ++violations;
      prev = std::max(prev, res.best.joint);
    }
  }
  EXPECT_EQ(violations, 0) << "of " << total;
}

TEST(BeamSearch, ForcedEosAtMaxLength) {
  const int V = 4;
  Matrix<double> lp = Matrix<double>::Constant(2, V, std::log(0.25));
  TableScorer att{V, 3};
  DecodeConfig cfg;
  cfg.max_len = 1;
  auto res = joint_beam_search(lp, att, cfg);
  for (const auto& h : res.ended) EXPECT_LE(h.labels.size(), 1u);
  Matrix<double> empty(0, V);
  EXPECT_THROW(joint_beam_search(empty, att, cfg), Error);
}

TEST(Recognize, ModelDecodeProducesValidTrace) {
  ModelConfig cfg = toy::config(ScorerKind::location_aware, {0, 90}, 14);
  Model<float> m(cfg, 3);
  auto clip = toy::clip(cfg, 6, 4);
  DecodeConfig dc;
  auto a = recognize(m, clip, dc);
  auto b = recognize(m, clip, dc);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.joint, b.joint);
  EXPECT_EQ(a.trace.num_steps(), int(a.labels.size()));
  EXPECT_EQ(a.trace.views, (std::vector<int>{0, 90}));
  validate_trace(a.trace);
  EXPECT_LE(a.att_logp, 0);
  EXPECT_LE(a.ctc_prefix_logp, 0);
  EXPECT_LE(int(a.labels.size()), 6);
  for (int l : a.labels) EXPECT_TRUE(l > 0 && l < 13);
}
