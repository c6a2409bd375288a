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

#include <string>
#include <vector>

#include "mvlip/beam_search.hpp"
#include "mvlip/model.hpp"
#include "mvlip/vocab.hpp"

namespace mvlip {

/// Adapts the model's attention decoder to the beam search scorer interface.
/// All steps are recorded on one inference graph owned by the caller.
template <class S>
class ModelAttentionScorer {
 public:
  using State = typename Model<S>::DecoderState;

  ModelAttentionScorer(Model<S>& model, Graph<S>& g, const typename Model<S>::Encoded& enc)
      : model_(model), g_(g), mem_(model.prepare(g, enc)) {
    for (const auto& v : enc.views) angles_.push_back(v.angle);
  }

  State initial_state() { return model_.initial_state(g_, mem_); }

  AttentionStep<State> step(const State& s, int prev_label) {
    auto st = model_.decode_step(g_, mem_, s, prev_label);
    AttentionStep<State> out;
    out.logp = to_std_vector(g_.value(st.logp));
    out.next = st.next;
    for (Var w : st.temporal) out.attention.temporal.push_back(to_std_vector(g_.value(w)));
    out.attention.view = to_std_vector(g_.value(st.view_weights));
    return out;
  }

  const std::vector<int>& angles() const { return angles_; }

 private:
  Model<S>& model_;
  Graph<S>& g_;
  typename Model<S>::DecoderMemory mem_;
  std::vector<int> angles_;
};

struct DecodeResult {
  std::string clip_id;
  LabelIds labels;
  VisemeSequence visemes;
  AttentionTrace trace;
  double att_logp = 0, ctc_prefix_logp = 0, joint = 0;
  std::vector<std::string> warnings;
};

inline VisemeSequence label_names(const LabelIds& ids, int vocab_size) {
  if (vocab_size == build_vocabulary().size()) return decode_labels(ids);
  VisemeSequence out;
  for (int i : ids) out.push_back("L" + std::to_string(i));
  return out;
}

/// Encodes a clip and runs joint CTC/attention decoding on it.
template <class S>
DecodeResult recognize(Model<S>& model, const MultiViewClip& clip, const DecodeConfig& cfg) {
  Graph<S> g(false);
  auto enc = model.encode(g, clip);
  Matrix<double> ctc = g.value(model.ctc_log_posteriors(g, enc)).template cast<double>();
  ModelAttentionScorer<S> scorer(model, g, enc);
  auto res = joint_beam_search(ctc, scorer, cfg);
  DecodeResult out;
  out.clip_id = clip.clip_id;
  out.labels = res.best.labels;
  out.visemes = label_names(out.labels, model.config().vocab_size);
  out.att_logp = res.best.att_logp;
  out.ctc_prefix_logp = res.best.ctc_prefix_logp;
  out.joint = res.best.joint;
  out.warnings = enc.warnings;
  out.trace.clip_id = clip.clip_id;
  out.trace.views = scorer.angles();
  out.trace.labels = out.visemes;
  out.trace.steps = std::move(res.best.trace);
  return out;
}

}  // namespace mvlip
