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

// View-temporal attention. Each view has its own temporal attention over its
// encoded frames (additive, multiplicative or location-aware scoring); the
// resulting per-view context vectors are fused with a per-step additive
// attention over views. Both weight vectors are recomputed at every decoding
// step and recorded in an AttentionTrace.

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/autograd.hpp"
#include "mvlip/config.hpp"
#include "mvlip/params.hpp"
#include "mvlip/vocab.hpp"

namespace mvlip {

// ---------------------------------------------------------------------------
// Traces

/// Attention emitted while producing one output label.
struct StepAttention {
  std::vector<std::vector<double>> temporal;  // [view][t]
  std::vector<double> view;                   // [view]
};

/// Per-step temporal and view weights of one decoded utterance.
struct AttentionTrace {
  std::string clip_id;
  std::vector<int> views;  // angle order of the view axis
  VisemeSequence labels;   // label emitted at each step
  std::vector<StepAttention> steps;

  int num_steps() const { return int(steps.size()); }
  int num_frames() const { return steps.empty() || steps[0].temporal.empty() ? 0 : int(steps[0].temporal[0].size()); }
};

inline bool on_simplex(const std::vector<double>& w, double tol = 1e-6) {
  if (w.empty()) return false;
  double s = 0;
  for (double x : w) {
    if (!(x >= 0) || !std::isfinite(x)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

/// Throws unless every temporal and view vector is a distribution.
inline void validate_trace(const AttentionTrace& tr, double tol = 1e-6) {
  const int T = tr.num_frames();
  for (int u = 0; u < tr.num_steps(); ++u) {
    const auto& st = tr.steps[u];
    if (st.temporal.size() != tr.views.size() || st.view.size() != tr.views.size())
      fail("trace step ", u, " does not cover ", tr.views.size(), " views");
    if (!on_simplex(st.view, tol)) fail("trace step ", u, ": view weights are not a distribution");
    for (size_t v = 0; v < st.temporal.size(); ++v) {
      if (int(st.temporal[v].size()) != T) fail("trace step ", u, " view ", v, ": ragged temporal weights");
      if (!on_simplex(st.temporal[v], tol)) fail("trace step ", u, " view ", v, ": temporal weights are not a distribution");
    }
  }
}

inline nlohmann::json trace_to_json(const AttentionTrace& tr) {
  nlohmann::ordered_json j;
  j["clip_id"] = tr.clip_id;
  j["views"] = tr.views;
  j["labels"] = tr.labels;
  nlohmann::ordered_json temporal = nlohmann::ordered_json::array(), view = nlohmann::ordered_json::array();
  for (const auto& st : tr.steps) {
    temporal.push_back(st.temporal);
    view.push_back(st.view);
  }
  j["temporal"] = temporal;
  j["view"] = view;
  return j;
}

inline AttentionTrace trace_from_json(const nlohmann::json& j) {
  AttentionTrace tr;
  tr.clip_id = j.value("clip_id", std::string());
  tr.views = j.at("views").get<std::vector<int>>();
  tr.labels = j.value("labels", VisemeSequence{});
  const auto& temporal = j.at("temporal");
  const auto& view = j.at("view");
  if (temporal.size() != view.size()) fail("trace has ", temporal.size(), " temporal steps but ", view.size(), " view steps");
  for (size_t u = 0; u < temporal.size(); ++u) {
    StepAttention st;
    st.temporal = temporal[u].get<std::vector<std::vector<double>>>();
    st.view = view[u].get<std::vector<double>>();
    tr.steps.push_back(std::move(st));
  }
  return tr;
}

inline void save_trace(const std::string& path, const AttentionTrace& tr) {
  std::ofstream out(path);
  if (!out) fail("cannot write ", path);
  out << trace_to_json(tr).dump() << '\n';
}

inline AttentionTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open trace ", path);
  try {
    return trace_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(path, ": ", e.what());
  }
}

// ---------------------------------------------------------------------------
// Temporal attention

inline std::string attention_prefix(int angle) { return "att." + std::to_string(angle) + "."; }

template <class S>
void register_temporal_attention(ParamSet<S>& ps, const ModelConfig& cfg, int angle, std::mt19937_64& rng) {
  const std::string p = attention_prefix(angle);
  const int D = cfg.encoder_dim(), Q = cfg.cell_size, A = cfg.att_dim;
  if (cfg.scorer == ScorerKind::multiplicative) {
    ps.add(p + "wm", init::uniform_fan_in<S>(Q, D, D, rng));
    return;
  }
  ps.add(p + "wk", init::uniform_fan_in<S>(D, A, D, rng));
  ps.add(p + "wq", init::uniform_fan_in<S>(Q, A, Q, rng));
  ps.add(p + "b", init::zeros<S>(1, A));
  ps.add(p + "v", init::uniform_fan_in<S>(A, 1, A, rng));
  if (cfg.scorer == ScorerKind::location_aware) {
    ps.add(p + "f", init::uniform_fan_in<S>(cfg.loc_channels, cfg.loc_kernel, cfg.loc_kernel, rng));
    ps.add(p + "u", init::uniform_fan_in<S>(cfg.loc_channels, A, cfg.loc_channels, rng));
  }
}

/// Per-utterance attention memory of one view: the keys and their
/// query-independent projection.
struct AttentionMemory {
  int angle = 0;
  Var keys;       // T x D
  Var keys_proj;  // T x A   (additive / location-aware)
  Var keys_t;     // D x T   (multiplicative)
  int frames = 0;
};

template <class S>
AttentionMemory prepare_memory(Graph<S>& g, Var keys, int angle, ParamSet<S>& ps, const ModelConfig& cfg) {
  AttentionMemory m;
  m.angle = angle;
  m.keys = keys;
  m.frames = g.rows(keys);
  if (m.frames == 0) fail("attention over zero frames");
  const std::string p = attention_prefix(angle);
  if (cfg.scorer == ScorerKind::multiplicative)
    m.keys_t = g.transpose(keys);
  else
    m.keys_proj = g.matmul(keys, g.param(ps.get(p + "wk")));
  return m;
}

/// Unnormalized scores (1 x T) of one view for the given query.
template <class S>
Var attention_scores(Graph<S>& g, ScorerKind kind, Var query, const AttentionMemory& mem, Var prev_weights,
                     ParamSet<S>& ps) {
  const std::string p = attention_prefix(mem.angle);
  if (kind == ScorerKind::multiplicative) {
    Var qw = g.matmul(query, g.param(ps.get(p + "wm")));  // 1 x D
    return g.matmul(qw, mem.keys_t);
  }
  Var pre = mem.keys_proj;
  if (kind == ScorerKind::location_aware) {
    if (!prev_weights.valid()) fail("location-aware attention needs the previous weights");
    if (g.cols(prev_weights) != mem.frames) fail("previous weights have the wrong length");
    Var loc = g.conv1d_same(prev_weights, g.param(ps.get(p + "f")));  // T x C
    pre = g.add(pre, g.matmul(loc, g.param(ps.get(p + "u"))));
  }
  Var q = g.add(g.matmul(query, g.param(ps.get(p + "wq"))), g.param(ps.get(p + "b")));
  Var e = g.matmul(g.tanh(g.add_row(pre, q)), g.param(ps.get(p + "v")));  // T x 1
  return g.transpose(e);
}

/// Returns (weights 1 x T, context 1 x D); context = sum_t weights[t] * keys[t].
template <class S>
std::pair<Var, Var> temporal_attend(Graph<S>& g, ScorerKind kind, Var query, const AttentionMemory& mem,
                                    Var prev_weights, ParamSet<S>& ps) {
  Var w = g.softmax_rows(attention_scores(g, kind, query, mem, prev_weights, ps));
  return {w, g.matmul(w, mem.keys)};
}

// ---------------------------------------------------------------------------
// View fusion

template <class S>
void register_view_fusion(ParamSet<S>& ps, const ModelConfig& cfg, std::mt19937_64& rng) {
  const int D = cfg.encoder_dim(), Q = cfg.cell_size, A = cfg.fusion_dim;
  ps.add("fuse.wc", init::uniform_fan_in<S>(D, A, D, rng));
  ps.add("fuse.wq", init::uniform_fan_in<S>(Q, A, Q, rng));
  ps.add("fuse.b", init::zeros<S>(1, A));
  ps.add("fuse.v", init::uniform_fan_in<S>(A, 1, A, rng));
}

/// Additive attention over per-view contexts, shared across views.
/// Returns (view weights 1 x V, fused context 1 x D).
template <class S>
std::pair<Var, Var> view_fuse(Graph<S>& g, const std::vector<Var>& contexts, Var query, ParamSet<S>& ps) {
  if (contexts.empty()) fail("view fusion over an empty view set");
  Var stacked = g.concat_rows(contexts);  // V x D
  Var q = g.add(g.matmul(query, g.param(ps.get("fuse.wq"))), g.param(ps.get("fuse.b")));
  Var e = g.matmul(g.tanh(g.add_row(g.matmul(stacked, g.param(ps.get("fuse.wc"))), q)), g.param(ps.get("fuse.v")));
  Var w = g.softmax_rows(g.transpose(e));
  return {w, g.matmul(w, stacked)};
}

/// CTC-branch fusion: per-view features (each T x D, in sorted angle order)
/// concatenated along the feature axis.
template <class S>
Var concat_views(Graph<S>& g, const std::vector<Var>& features) {
  if (features.empty()) fail("no views to concatenate");
  for (Var f : features)
    if (g.rows(f) != g.rows(features[0]))
      fail("views disagree on frame count: ", g.rows(f), " vs ", g.rows(features[0]));
  return features.size() == 1 ? features[0] : g.concat_cols(features);
}

template <class S>
std::vector<double> to_std_vector(const Matrix<S>& row) {
  std::vector<double> out(size_t(row.size()));
  for (Eigen::Index i = 0; i < row.size(); ++i) out[size_t(i)] = double(row.data()[i]);
  return out;
}

}  // namespace mvlip
