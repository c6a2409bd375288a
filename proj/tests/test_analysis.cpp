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

#include <fstream>
#include <random>
#include <sstream>

#include "mvlip/analysis.hpp"
#include "mvlip/compressor.hpp"

using namespace mvlip;

namespace {

AttentionTrace single_view_trace(const std::vector<std::vector<double>>& rows) {
  AttentionTrace tr;
  tr.clip_id = "c";
  tr.views = {0};
  for (const auto& r : rows) tr.steps.push_back({{r}, {1.0}});
  return tr;
}

AttentionTrace random_trace(int U, int T, int V, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  auto simplex = [&](int n) {
    std::vector<double> w(n);
    double s = 0;
    for (auto& x : w) s += x = u(rng);
    for (auto& x : w) x /= s;
    return w;
  };
  AttentionTrace tr;
  tr.clip_id = "r";
  for (int v = 0; v < V; ++v) tr.views.push_back(kSupportedViews[v]);
  for (int k = 0; k < U; ++k) {
    StepAttention st;
    for (int v = 0; v < V; ++v) st.temporal.push_back(simplex(T));
    st.view = simplex(V);
    tr.steps.push_back(st);
    tr.labels.emplace_back(kVisemeClasses[rng() % kNumVisemeClasses]);
  }
  return tr;
}

FrameAlignment alignment(const VisemeSequence& labels, std::vector<int> boundaries = {}) {
  FrameAlignment a;
  a.labels = labels;
  a.word_boundaries = std::move(boundaries);
  return a;
}

}  // namespace

TEST(CumulativeAttention, Examples) {
  auto fi = cumulative_attention(single_view_trace({{0.2, 0.3, 0.5}, {0.1, 0.6, 0.3}}));
  ASSERT_EQ(fi.T(), 3);
  EXPECT_NEAR(fi.raw[0], 0.3, 1e-15);
  EXPECT_NEAR(fi.raw[1], 0.9, 1e-15);
  EXPECT_NEAR(fi.raw[2], 0.8, 1e-15);
  EXPECT_NEAR(fi.normalized[0], 1.0 / 3, 1e-15);
  EXPECT_EQ(fi.normalized[1], 1.0);
  EXPECT_NEAR(fi.normalized[2], 8.0 / 9, 1e-15);
  auto uni = cumulative_attention(single_view_trace({{0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}}));
  for (double x : uni.normalized) EXPECT_EQ(x, 1.0);
  EXPECT_THROW(cumulative_attention(AttentionTrace{}), Error);
}

TEST(CumulativeAttention, ViewWeightedReduction) {
  AttentionTrace tr;
  tr.views = {0, 90};
  tr.steps.push_back({{{1.0, 0.0}, {0.0, 1.0}}, {0.75, 0.25}});
  auto fi = cumulative_attention(tr);
  EXPECT_DOUBLE_EQ(fi.raw[0], 0.75);
  EXPECT_DOUBLE_EQ(fi.raw[1], 0.25);
  // a two-view trace whose second view carries no weight reduces to the first
  AttentionTrace one = single_view_trace({{0.2, 0.8}});
  AttentionTrace two;
  two.views = {0, 90};
  two.steps.push_back({{{0.2, 0.8}, {0.9, 0.1}}, {1.0, 0.0}});
  EXPECT_EQ(cumulative_attention(one).raw, cumulative_attention(two).raw);
}

TEST(CumulativeAttention, ScaleInvariantOrdering) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 50; ++rep) {
    auto tr = random_trace(1 + int(rng() % 5), 1 + int(rng() % 30), 1 + int(rng() % 5), rng);
    auto a = cumulative_attention(tr);
    for (double c : {0.5, 3.0, 1e-3}) {
      auto scaled = tr;
      for (auto& st : scaled.steps)
        for (auto& row : st.temporal)
          for (auto& x : row) x *= c;
      auto b = cumulative_attention(scaled);
      for (int t = 0; t < a.T(); ++t) {
        EXPECT_NEAR(b.raw[t], c * a.raw[t], 1e-12);
        EXPECT_NEAR(b.normalized[t], a.normalized[t], 1e-12);
      }
      EXPECT_EQ(top_frames(a), top_frames(b));
    }
  }
}

TEST(TopFrames, CountIsCeilOfFraction) {
  for (int T = 1; T <= 50; ++T) {
    FrameImportance fi;
    fi.raw.assign(T, 1.0);
    fi.normalized.assign(T, 1.0);
    EXPECT_EQ(int(top_frames(fi).size()), (3 * T + 9) / 10) << "T=" << T;
    EXPECT_EQ(int(top_frames(fi, 1.0).size()), T);
  }
  EXPECT_THROW(top_count(0.0, 5), Error);
  EXPECT_THROW(top_count(1.5, 5), Error);
}

TEST(TopFrames, OrderAndTies) {
  FrameImportance fi;
  fi.raw = {0.5, 0.5, 0.1};
  EXPECT_EQ(top_frames(fi, 0.33), std::vector<int>{0});
  EXPECT_EQ(top_frames(fi, 0.34), (std::vector<int>{0, 1}));
  fi.raw = {0.1, 0.9, 0.3, 0.9, 0.2, 0.0, 0.7, 0.4, 0.6, 0.5};
  EXPECT_EQ(top_frames(fi), (std::vector<int>{1, 3, 6}));
}

TEST(ImportantVisemes, RunsAndWords) {
  EXPECT_EQ(important_visemes({0, 1}, alignment({"A", "A", "B"})), std::vector<std::string>{"A"});
  // six frames: word 1 = A A V1, word 2 = B B V2
  auto a = alignment({"A", "A", "V1", "B", "B", "V2"}, {3});
  // trace puts weight on frames 1, 2 and 4 (top 50%)
  auto fi = cumulative_attention(single_view_trace({{0.05, 0.4, 0.3, 0.0, 0.2, 0.05}}));
  auto top = top_frames(fi, 0.5);
  EXPECT_EQ(top, (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(important_visemes(top, a), (std::vector<std::string>{"A", "V1", ";", "B"}));
  EXPECT_THROW(important_visemes({6}, a), Error);
}

TEST(ImportantVisemes, PhraseWithFiveSegments) {
  // H V2 C E V3, two frames each; attention on the V2, E and V3 segments
  auto a = alignment({"H", "H", "V2", "V2", "C", "C", "E", "E", "V3", "V3"}, {6});
  EXPECT_EQ(important_visemes({3, 6, 9}, a), (std::vector<std::string>{"V2", ";", "E", "V3"}));
  auto one_word = alignment(a.labels);
  EXPECT_EQ(important_visemes({3, 6, 9}, one_word), (std::vector<std::string>{"V2", "E", "V3"}));
}

TEST(ViewImportance, UniformWeightsMakeAllViewsSignificant) {
  AttentionTrace tr;
  tr.views = {0, 30, 45, 60, 90};
  for (const auto& cls : kVisemeClasses) {
    tr.steps.push_back({std::vector<std::vector<double>>(5, {1.0}), std::vector<double>(5, 0.2)});
    tr.labels.emplace_back(cls);
  }
  auto tab = view_importance({tr});
  for (const auto& r : tab.rows) {
    EXPECT_TRUE(r.present());
    EXPECT_EQ(r.significant, tr.views);
  }
}

TEST(ViewImportance, DominantViewAndAbsentClasses) {
  AttentionTrace t1, t2;
  t1.views = t2.views = {0, 90};
  t1.steps.push_back({{{1.0}, {1.0}}, {0.9, 0.1}});
  t1.labels.push_back("A");
  t2.steps.push_back({{{1.0}, {1.0}}, {0.7, 0.3}});
  t2.labels.push_back("A");
  t2.steps.push_back({{{1.0}, {1.0}}, {0.45, 0.55}});
  t2.labels.push_back("E");
  auto tab = view_importance({t1, t2});
  const auto& a = tab.row("A");
  EXPECT_EQ(a.steps, 2);
  EXPECT_NEAR(a.mean_weight[0], 0.8, 1e-15);
  EXPECT_NEAR(a.mean_weight[1], 0.2, 1e-15);
  EXPECT_EQ(a.significant, std::vector<int>{0});
  EXPECT_EQ(tab.row("E").significant, (std::vector<int>{0, 90}));
  EXPECT_FALSE(tab.row("B").present());
  EXPECT_TRUE(tab.row("B").mean_weight.empty());
  std::ostringstream csv;
  write_view_importance_csv(csv, tab);
  EXPECT_NE(csv.str().find("A,0,0.8,1\n"), std::string::npos);
  EXPECT_NE(csv.str().find("B,0,,absent\n"), std::string::npos);
  AttentionTrace bad = t1;
  bad.views = {0, 45};
  EXPECT_THROW(view_importance({t1, bad}), Error);
}

TEST(Compression, PlanArithmetic) {
  auto imp = [](std::vector<double> a) {
    FrameImportance fi;
    fi.raw = a;
    fi.normalized = a;
    return fi;
  };
  auto p1 = plan(imp({1.0}), 96, 96);
  EXPECT_EQ(p1.frames[0].h_new, 96);
  EXPECT_EQ(compression_factor(p1), 0.0);
  auto p0 = plan(imp({0.0}), 96, 96);
  EXPECT_EQ(p0.frames[0].h_new, 48);
  EXPECT_EQ(compression_factor(p0), 0.75);
  auto ph = plan(imp({0.5}), 96, 96);
  EXPECT_EQ(ph.frames[0].h_new, 72);
  EXPECT_EQ(ph.frames[0].w_new, 72);
  // mixed: 96^2 + 72^2 + 48^2 = 9216 + 5184 + 2304 = 16704 of 27648
  auto mixed = plan(imp({1.0, 0.5, 0.0}), 96, 96);
  EXPECT_EQ(mixed.kept_pixels(), 16704);
  EXPECT_EQ(compression_factor(mixed), 1.0 - 16704.0 / 27648.0);
  // half-up rounding: 5 / 2 * 1.5 = 3.75 -> 4, 6 / 2 * 1.5 = 4.5 -> 5
  auto odd = plan(imp({0.5}), 5, 6);
  EXPECT_EQ(odd.frames[0].h_new, 4);
  EXPECT_EQ(odd.frames[0].w_new, 5);
  EXPECT_THROW(plan(imp({1.2}), 8, 8), Error);
}

TEST(Compression, MonotoneInImportance) {
  int prev = 0;
  for (int k = 0; k <= 100; ++k) {
    int h = scaled_side(64, k / 100.0);
    EXPECT_GE(h, prev);
    EXPECT_GE(h, 32);
    EXPECT_LE(h, 64);
    prev = h;
  }
}

TEST(Compression, ApplyPlan) {
  FrameTensor f(3, 8, 8, 1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& x : f.data) x = u(rng);
  FrameImportance fi;
  fi.normalized = fi.raw = {1.0, 0.0, 0.5};
  auto p = plan(fi, 8, 8);
  auto out = apply_plan(f, p);
  for (size_t i = 0; i < f.frame_size(); ++i) EXPECT_EQ(out.data[i], f.data[i]);
  FrameTensor flat(3, 8, 8, 1);
  for (auto& x : flat.data) x = 0.3f;
  auto fo = apply_plan(flat, p);
  for (float x : fo.data) EXPECT_FLOAT_EQ(x, 0.3f);
  EXPECT_THROW(apply_plan(FrameTensor(2, 8, 8, 1), p), Error);
  // 4x4 unit checkerboard at a_cum = 0: every 2x2 block averages to 0.5
  FrameTensor cb(1, 4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) cb.at(0, y, x) = float((x + y) % 2);
  FrameImportance z;
  z.raw = z.normalized = {0.0};
  auto cbo = apply_plan(cb, plan(z, 4, 4));
  for (float x : cbo.data) EXPECT_FLOAT_EQ(x, 0.5f);
}

TEST(Compression, UniformBaseline) {
  FrameTensor f(4, 96, 96, 1);
  auto passthrough = uniform_baseline(f, 0.0);
  for (const auto& fp : passthrough.plan.frames) EXPECT_EQ(fp.h_new, 96);
  auto quarter = uniform_plan("x", 1, 96, 96, 0.25);
  EXPECT_NEAR(std::sqrt(0.75), 0.866, 1e-3);
  EXPECT_NEAR(double(quarter.frames[0].h_new) / 96, std::sqrt(0.75), 0.011);
  EXPECT_THROW(uniform_plan("x", 1, 8, 8, 0.75), Error);
  EXPECT_THROW(uniform_plan("x", 1, 8, 8, -0.1), Error);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 200; ++rep) {
    const int T = 1 + int(rng() % 40), h = 16 + int(rng() % 81), w = 16 + int(rng() % 81);
    FrameImportance fi;
    for (int t = 0; t < T; ++t) fi.raw.push_back(u(rng));
    const double mx = *std::max_element(fi.raw.begin(), fi.raw.end());
    for (double r : fi.raw) fi.normalized.push_back(r / mx);
    auto att = plan(fi, h, w);
    const double factor = compression_factor(att);
    if (factor >= 0.75) continue;
    auto uni = uniform_plan("x", T, h, w, factor);
    EXPECT_LE(std::abs(double(uni.kept_pixels()) - double(att.kept_pixels())) / double(att.kept_pixels()), 0.01)
        << T << " frames " << h << "x" << w;
  }
}

TEST(Compression, PlanJsonRoundTrip) {
  FrameImportance fi;
  fi.raw = fi.normalized = {1.0, 0.25};
  auto p = plan(fi, 10, 12);
  auto back = plan_from_json(nlohmann::json::parse(plan_to_json(p).dump()));
  EXPECT_EQ(back.kept_pixels(), p.kept_pixels());
  EXPECT_EQ(compression_factor(back), compression_factor(p));
}

TEST(Compressor, MatchesReferenceResampler) {
  std::ifstream in(std::string(MVLIP_GOLDEN_DIR) + "/resample.json");
  ASSERT_TRUE(in.good());
  const auto j = nlohmann::json::parse(in);
  const int H = j["height"], W = j["width"];
  const auto a = j["a_cum"].get<std::vector<double>>();
  const int T = int(a.size());
  FrameImportance fi{"golden", a, a};
  const auto p = plan(fi, H, W);
  FrameTensor frames(T, H, W, 1);
  for (int t = 0; t < T; ++t) {
    EXPECT_EQ(p.frames[t].h_new, j["sizes"][t][0].get<int>());
    EXPECT_EQ(p.frames[t].w_new, j["sizes"][t][1].get<int>());
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) frames.at(t, y, x, 0) = j["frames"][t][y][x].get<float>();
  }
  const auto out = apply_plan(frames, p);
  double worst = 0;
  for (int t = 0; t < T; ++t)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        worst = std::max(worst, std::abs(double(out.at(t, y, x, 0)) - j["expected"][t][y][x].get<double>()));
  EXPECT_LT(worst, 1e-5);
  // the a_cum = 1 frame is untouched
  for (int k = 0; k < H * W; ++k) EXPECT_EQ(out.data[2 * H * W + k], frames.data[2 * H * W + k]);
}
