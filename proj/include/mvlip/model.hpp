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

// The multi-view recognizer: per-view encoders, a CTC head over the
// concatenated views, and an attention decoder driven by view-temporal
// attention. Training combines both branches (hybrid objective).

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/attention.hpp"
#include "mvlip/autograd.hpp"
#include "mvlip/config.hpp"
#include "mvlip/dataio.hpp"
#include "mvlip/encoder.hpp"
#include "mvlip/params.hpp"

namespace mvlip {

/// Matrix-level encoder result for one clip.
template <class S>
struct EncoderOutput {
  std::vector<int> angles;                 // views actually present, sorted
  std::vector<Matrix<S>> conv_features;    // per view, T x conv_dim
  std::vector<Matrix<S>> features;         // per view, T x 2*cell
  std::vector<Matrix<S>> final_hidden;     // per view, 1 x 2*cell
  std::vector<std::string> warnings;       // e.g. configured views missing from the clip
  int frames = 0;
};

template <class S>
class Model {
 public:
  /// Graph handles of an encoded clip.
  struct Encoded {
    std::vector<ViewEncoding> views;
    std::vector<std::string> warnings;
    int frames = 0;
  };

  struct DecoderMemory {
    std::vector<AttentionMemory> views;
  };

  struct DecoderState {
    Var hidden, cell;                 // 1 x cell each
    std::vector<Var> prev_weights;    // per view, 1 x T
  };

  struct Step {
    Var logp;                         // 1 x vocab log distribution
    DecoderState next;
    std::vector<Var> temporal;        // per view, 1 x T
    std::vector<Var> contexts;        // per view, 1 x D
    Var view_weights;                 // 1 x V
    Var fused;                        // 1 x D
  };

  struct HybridLoss {
    Var total;
    double ctc_nll = 0;   // -log p_ctc(y|x)
    double att_nll = 0;   // label smoothed attention cross entropy
    bool feasible = true;
  };

  explicit Model(ModelConfig cfg, uint64_t seed = 1) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    for (int angle : cfg_.views) register_view_encoder(params_, cfg_, angle, rng);
    for (int angle : cfg_.views) register_temporal_attention(params_, cfg_, angle, rng);
    register_view_fusion(params_, cfg_, rng);
    const int D = cfg_.encoder_dim(), H = cfg_.cell_size, V = cfg_.vocab_size, E = cfg_.embed_dim;
    params_.add("dec.embed", init::uniform_fan_in<S>(V, E, 1, rng));
    params_.add("dec.lstm.wx", init::uniform_fan_in<S>(E + D, 4 * H, H, rng));
    params_.add("dec.lstm.wh", init::uniform_fan_in<S>(H, 4 * H, H, rng));
    Matrix<S> b = init::zeros<S>(1, 4 * H);
    b.middleCols(H, H).setOnes();
    params_.add("dec.lstm.b", std::move(b));
    params_.add("dec.out.w", init::uniform_fan_in<S>(H + D, V, H + D, rng));
    params_.add("dec.out.b", init::zeros<S>(1, V));
    const int Dc = D * int(cfg_.views.size());
    params_.add("ctc.w", init::uniform_fan_in<S>(Dc, V, Dc, rng));
    params_.add("ctc.b", init::zeros<S>(1, V));
  }

  const ModelConfig& config() const { return cfg_; }
  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }

  // ---- graph level ----

  /// Encodes every present view. Views outside the configuration are an
  /// error; configured views absent from the clip are reported as warnings.
  Encoded encode(Graph<S>& g, const MultiViewClip& clip, std::mt19937_64* rng = nullptr, double dropout = -1) {
    if (clip.views.empty()) fail("clip ", clip.clip_id, " has no views");
    Encoded enc;
    for (int angle : cfg_.views)
      if (!clip.views.count(angle))
        enc.warnings.push_back("clip " + clip.clip_id + ": configured view " + std::to_string(angle) + " missing");
    for (const auto& [angle, frames] : clip.views) {
      if (std::find(cfg_.views.begin(), cfg_.views.end(), angle) == cfg_.views.end())
        fail("clip ", clip.clip_id, ": view ", angle, " is not configured in the model");
      if (frames.H != cfg_.height || frames.W != cfg_.width || frames.C != cfg_.channels)
        fail("clip ", clip.clip_id, " view ", angle, ": frames are ", frames.H, "x", frames.W, "x", frames.C,
             " but the model expects ", cfg_.height, "x", cfg_.width, "x", cfg_.channels);
      if (enc.frames && frames.T != enc.frames) fail("clip ", clip.clip_id, ": views disagree on frame count");
      enc.frames = frames.T;
      Var x = g.constant(frames_to_matrix<S>(frames));
      enc.views.push_back(encode_view(g, x, angle, params_, cfg_, rng, dropout));
    }
    return enc;
  }

  /// T x vocab per-frame log posteriors of the CTC branch.
  Var ctc_log_posteriors(Graph<S>& g, const Encoded& enc) {
    if (enc.views.size() != cfg_.views.size())
      fail("the CTC head needs all ", cfg_.views.size(), " configured views, clip has ", enc.views.size());
    std::vector<Var> feats;
    for (const auto& v : enc.views) feats.push_back(v.features);
    Var x = concat_views(g, feats);
    Var logits = g.add_row(g.matmul(x, g.param(params_.get("ctc.w"))), g.param(params_.get("ctc.b")));
    return g.log_softmax_rows(logits);
  }

  DecoderMemory prepare(Graph<S>& g, const Encoded& enc) {
    DecoderMemory m;
    for (const auto& v : enc.views) m.views.push_back(prepare_memory(g, v.features, v.angle, params_, cfg_));
    return m;
  }

  DecoderState initial_state(Graph<S>& g, const DecoderMemory& mem) {
    DecoderState s;
    s.hidden = g.constant(Matrix<S>::Zero(1, cfg_.cell_size));
    s.cell = g.constant(Matrix<S>::Zero(1, cfg_.cell_size));
    for (const auto& v : mem.views) s.prev_weights.push_back(g.constant(Matrix<S>::Constant(1, v.frames, S(1) / v.frames)));
    return s;
  }

  /// One attention decoder step: per-view temporal attention, view fusion,
  /// recurrent update and output distribution.
  Step decode_step(Graph<S>& g, const DecoderMemory& mem, const DecoderState& state, int prev_label) {
    if (prev_label < 0 || prev_label >= cfg_.vocab_size) fail("previous label ", prev_label, " outside the vocabulary");
    Step st;
    for (size_t v = 0; v < mem.views.size(); ++v) {
      auto [w, ctx] = temporal_attend(g, cfg_.scorer, state.hidden, mem.views[v], state.prev_weights[v], params_);
      st.temporal.push_back(w);
      st.contexts.push_back(ctx);
    }
    std::tie(st.view_weights, st.fused) = view_fuse(g, st.contexts, state.hidden, params_);
    Var emb = g.gather_row(g.param(params_.get("dec.embed")), prev_label);
    Var hc = g.lstm_cell(g.concat_cols({emb, st.fused}), state.hidden, state.cell, g.param(params_.get("dec.lstm.wx")),
                         g.param(params_.get("dec.lstm.wh")), g.param(params_.get("dec.lstm.b")));
    const int H = cfg_.cell_size;
    st.next.hidden = g.slice_cols(hc, 0, H);
    st.next.cell = g.slice_cols(hc, H, H);
    st.next.prev_weights = st.temporal;
    Var logits = g.add(g.matmul(g.concat_cols({st.next.hidden, st.fused}), g.param(params_.get("dec.out.w"))),
                       g.param(params_.get("dec.out.b")));
    st.logp = g.log_softmax_rows(logits);
    return st;
  }

  /// Teacher-forced attention log posteriors: one row per target label plus
  /// the final eos row.
  Var teacher_forced(Graph<S>& g, const Encoded& enc, const LabelIds& target) {
    DecoderMemory mem = prepare(g, enc);
    DecoderState state = initial_state(g, mem);
    std::vector<Var> rows;
    int prev = cfg_.eos_id();
    for (size_t u = 0; u <= target.size(); ++u) {
      Step st = decode_step(g, mem, state, prev);
      rows.push_back(st.logp);
      state = st.next;
      if (u < target.size()) prev = target[u];
    }
    return g.concat_rows(rows);
  }

  /// -[alpha * log p_ctc + (1 - alpha) * log p_att]. alpha == 1 skips the
  /// attention branch and alpha == 0 the CTC branch.
  HybridLoss hybrid_objective(Graph<S>& g, const Encoded& enc, const LabelIds& target, double alpha,
                              double smoothing) {
    if (alpha < 0 || alpha > 1) fail("ctc weight must lie in [0,1], got ", alpha);
    for (int l : target)
      if (l == cfg_.blank_id() || l == cfg_.eos_id() || l < 0 || l >= cfg_.vocab_size)
        fail("target label ", l, " is not an output label");
    HybridLoss out;
    std::vector<Var> terms;
    std::vector<S> coeffs;
    if (alpha > 0) {
      Var ctc = g.ctc_loss(ctc_log_posteriors(g, enc), target, cfg_.blank_id());
      out.ctc_nll = double(g.scalar(ctc));
      out.feasible = std::isfinite(out.ctc_nll);
      terms.push_back(ctc);
      coeffs.push_back(S(alpha));
    }
    if (alpha < 1) {
      LabelIds ys = target;
      ys.push_back(cfg_.eos_id());
      Var att = g.smoothed_nll(teacher_forced(g, enc, target), ys, S(smoothing));
      out.att_nll = double(g.scalar(att));
      terms.push_back(att);
      coeffs.push_back(S(1 - alpha));
    }
    out.total = g.linear_combination(terms, coeffs);
    return out;
  }

  // ---- matrix level ----

  EncoderOutput<S> encode_all(const MultiViewClip& clip) {
    Graph<S> g(false);
    Encoded enc = encode(g, clip);
    EncoderOutput<S> out;
    out.frames = enc.frames;
    out.warnings = enc.warnings;
    for (const auto& v : enc.views) {
      out.angles.push_back(v.angle);
      out.conv_features.push_back(g.value(v.conv_features));
      out.features.push_back(g.value(v.features));
      out.final_hidden.push_back(g.value(v.final_hidden));
    }
    return out;
  }

  Matrix<S> ctc_posteriors(const MultiViewClip& clip) {
    Graph<S> g(false);
    return g.value(ctc_log_posteriors(g, encode(g, clip)));
  }

  // ---- persistence ----

  void save(const std::string& path, const nlohmann::json& extra = nlohmann::json::object()) const {
    nlohmann::json cfg = extra;
    cfg["model"] = cfg_;
    write_checkpoint(path, cfg, params_);
  }

  static Model load(const std::string& path, nlohmann::json* extra = nullptr) {
    CheckpointData d = read_checkpoint(path);
    Model m(d.config.at("model").get<ModelConfig>());
    if (d.tensors.size() != m.params_.size())
      fail(path, ": checkpoint has ", d.tensors.size(), " tensors, model expects ", m.params_.size());
    for (auto& [name, value] : d.tensors) {
      Param<S>& p = m.params_.get(name);
      if (p.value.rows() != value.rows() || p.value.cols() != value.cols()) fail(path, ": shape mismatch for ", name);
      p.value = value.template cast<S>();
    }
    if (extra) *extra = d.config;
    return m;
  }

 private:
  ModelConfig cfg_;
  ParamSet<S> params_;
};

}  // namespace mvlip
