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

// Small models, clips and a finite difference checker shared by tests.

#include <cmath>
#include <functional>
#include <random>

#include "mvlip/model.hpp"

namespace toy {

inline mvlip::ModelConfig config(mvlip::ScorerKind kind, std::vector<int> views = {0, 90}, int vocab = 5) {
  mvlip::ModelConfig c;
  c.height = c.width = 8;
  c.conv_channels = {2, 3};
  c.cell_size = 3;
  c.att_dim = 4;
  c.fusion_dim = 3;
  c.embed_dim = 2;
  c.views = std::move(views);
  c.scorer = kind;
  c.loc_kernel = 3;
  c.loc_channels = 2;
  c.vocab_size = vocab;
  c.dropout = 0;
  return c;
}

inline mvlip::MultiViewClip clip(const mvlip::ModelConfig& c, int T, uint64_t seed, std::vector<int> views = {}) {
  if (views.empty()) views = c.views;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  mvlip::MultiViewClip out;
  out.clip_id = "toy" + std::to_string(seed);
  for (int a : views) {
    mvlip::FrameTensor f(T, c.height, c.width, c.channels);
    for (auto& x : f.data) x = u(rng);
    out.views.emplace(a, std::move(f));
  }
  return out;
}

/// Adds N(0, sd) noise to every parameter so checks run at a generic point
/// (zero biases can put ReLU inputs exactly on the kink).
template <class PS>
void jitter(PS& ps, uint64_t seed, double sd = 0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, sd);
  for (size_t i = 0; i < ps.size(); ++i)
    for (Eigen::Index k = 0; k < ps[i].value.size(); ++k) ps[i].value.data()[k] += d(rng);
}

struct GradCheck {
  double rel_error = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double norm = 0;
  size_t checked = 0;
};

/// Central differences over every element of every parameter in `ps`.
/// `loss` must build a fresh graph and return the scalar loss node.
template <class PS>
GradCheck check_gradients(PS& ps, const std::function<mvlip::Var(mvlip::Graph<double>&)>& loss, double h = 1e-6) {
  ps.zero_grad();
  {
    mvlip::Graph<double> g;
    g.backward(loss(g));
  }
  double diff = 0, na = 0, nn = 0;
  GradCheck r;
  for (size_t i = 0; i < ps.size(); ++i) {
    auto& p = ps[i];
    for (Eigen::Index k = 0; k < p.value.size(); ++k) {
      double& x = p.value.data()[k];
      const double keep = x;
      auto eval = [&] {
        mvlip::Graph<double> g(false);
        return g.scalar(loss(g));
      };
      x = keep + h;
      const double up = eval();
      x = keep - h;
      const double down = eval();
      x = keep;
      const double num = (up - down) / (2 * h), ana = p.grad.data()[k];
      diff += (num - ana) * (num - ana);
      na += ana * ana;
      nn += num * num;
      ++r.checked;
    }
  }
  r.norm = std::sqrt(std::max(na, nn));
  r.rel_error = r.norm > 0 ? std::sqrt(diff) / r.norm : 0;
  return r;
}

}  // namespace toy
