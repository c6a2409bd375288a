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


// Mini-batch training of the hybrid objective with Adam and early stopping
// on validation VER.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/metrics.hpp"
#include "mvlip/model.hpp"
#include "mvlip/recognizer.hpp"

namespace mvlip {

struct TrainConfig {
  double ctc_weight = 0.4;  // alpha
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int batch_size = 16;
  int epochs = 100;
  double label_smoothing = 0.1;
  double dropout = 0.1;
  int patience = 10;        // epochs without improvement; 0 disables early stopping
  double grad_clip = 5.0;   // global norm; 0 disables
  uint64_t seed = 1;
  DecodeConfig decode{};    // used for validation VER

  void validate() const {
    if (!(ctc_weight >= 0 && ctc_weight <= 1)) fail("ctc_weight must lie in [0,1]");
    if (!(learning_rate > 0)) fail("learning_rate must be positive");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) fail("Adam betas must lie in [0,1)");
    if (batch_size < 1) fail("batch_size must be at least 1");
    if (epochs < 1) fail("epochs must be at least 1");
    if (!(label_smoothing >= 0 && label_smoothing < 1)) fail("label_smoothing must lie in [0,1)");
    if (!(dropout >= 0 && dropout < 1)) fail("dropout must lie in [0,1)");
    if (patience < 0) fail("patience must be non-negative");
    if (grad_clip < 0) fail("grad_clip must be non-negative");
    decode.validate();
  }
};

inline void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = nlohmann::json{{"beam_width", c.beam_width}, {"ctc_weight", c.ctc_weight}, {"max_len", c.max_len}};
}
inline void from_json(const nlohmann::json& j, DecodeConfig& c) {
  DecodeConfig d;
  c.beam_width = j.value("beam_width", d.beam_width);
  c.ctc_weight = j.value("ctc_weight", d.ctc_weight);
  c.max_len = j.value("max_len", d.max_len);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"ctc_weight", c.ctc_weight}, {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
                     {"beta2", c.beta2},           {"adam_eps", c.adam_eps},           {"batch_size", c.batch_size},
                     {"epochs", c.epochs},         {"label_smoothing", c.label_smoothing}, {"dropout", c.dropout},
                     {"patience", c.patience},     {"grad_clip", c.grad_clip},         {"seed", c.seed},
                     {"decode", c.decode}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.ctc_weight = j.value("ctc_weight", d.ctc_weight);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.label_smoothing = j.value("label_smoothing", d.label_smoothing);
  c.dropout = j.value("dropout", d.dropout);
  c.patience = j.value("patience", d.patience);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.seed = j.value("seed", d.seed);
  c.decode = j.value("decode", d.decode);
}

template <class S>
class Adam {
 public:
  Adam(ParamSet<S>& ps, double lr, double b1, double b2, double eps) : ps_(ps), lr_(lr), b1_(b1), b2_(b2), eps_(eps) {
    for (size_t i = 0; i < ps.size(); ++i) {
      m_.push_back(Matrix<S>::Zero(ps[i].value.rows(), ps[i].value.cols()));
      v_.push_back(m_.back());
    }
  }

  void step() {
    ++t_;
    const double c1 = 1 - std::pow(b1_, t_), c2 = 1 - std::pow(b2_, t_);
    const S a = S(lr_ * std::sqrt(c2) / c1);
    for (size_t i = 0; i < ps_.size(); ++i) {
      auto& p = ps_[i];
      m_[i] = S(b1_) * m_[i] + S(1 - b1_) * p.grad;
      v_[i] = S(b2_) * v_[i] + S(1 - b2_) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= a * m_[i].array() / (v_[i].array().sqrt() + S(eps_ * std::sqrt(c2)));
    }
  }

  long steps() const { return t_; }

 private:
  ParamSet<S>& ps_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Matrix<S>> m_, v_;
};

/// Scales all gradients so their global norm is at most `max_norm`. Returns
/// the norm before clipping.
template <class S>
double clip_grad_norm(ParamSet<S>& ps, double max_norm) {
  double sq = 0;
  for (size_t i = 0; i < ps.size(); ++i) sq += double(ps[i].grad.squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm)
    for (size_t i = 0; i < ps.size(); ++i) ps[i].grad *= S(max_norm / norm);
  return norm;
}

/// A clip with its encoded target, ready for training.
struct TrainingExample {
  MultiViewClip clip;
  LabelIds target;
};

inline std::vector<TrainingExample> load_examples(const DatasetManifest& m, const std::vector<const ManifestRecord*>& recs) {
  std::vector<TrainingExample> out;
  for (const auto* r : recs) out.push_back({load_clip(m, *r), encode_labels(r->transcript)});
  return out;
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_ver = 0;
  double val_loss = 0;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_ver = 0;
  bool stopped_early = false;
};

/// Mean hybrid loss over examples, no dropout.
template <class S>
double mean_loss(Model<S>& model, const std::vector<TrainingExample>& data, const TrainConfig& cfg) {
  double total = 0;
  for (const auto& ex : data) {
    Graph<S> g(false);
    auto enc = model.encode(g, ex.clip);
    total += double(g.scalar(model.hybrid_objective(g, enc, ex.target, cfg.ctc_weight, cfg.label_smoothing).total));
  }
  return data.empty() ? 0.0 : total / double(data.size());
}

/// Corpus VER of decoding every example.
template <class S>
double corpus_ver(Model<S>& model, const std::vector<TrainingExample>& data, const DecodeConfig& dc) {
  std::vector<std::pair<VisemeSequence, VisemeSequence>> pairs;
  for (const auto& ex : data) pairs.emplace_back(recognize(model, ex.clip, dc).visemes, ex.clip.transcript);
  return evaluate(pairs).ver;
}

/// Trains in place. `val` may be empty, in which case the training set is
/// used for model selection. Each epoch is reported to `on_epoch` and, when
/// non-null, appended to `csv` as `epoch,train_loss,val_ver`.
template <class S>
TrainResult train(Model<S>& model, const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& val, const TrainConfig& cfg, std::ostream* csv = nullptr,
                  const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty()) fail("training set is empty");
  const auto& select = val.empty() ? train_set : val;
  Adam<S> opt(model.params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::mt19937_64 rng(cfg.seed);
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), size_t(0));

  TrainResult res;
  auto best_params = model.params().values();
  double best_ver = std::numeric_limits<double>::infinity(), best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  if (csv) *csv << "epoch,train_loss,val_ver\n";
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    const int batches = int((order.size() + cfg.batch_size - 1) / cfg.batch_size);
    for (int b = 0; b < batches; ++b) {
      model.params().zero_grad();
      const size_t lo = size_t(b) * cfg.batch_size, hi = std::min(order.size(), lo + size_t(cfg.batch_size));
      double batch_loss = 0;
      for (size_t k = lo; k < hi; ++k) {
        const auto& ex = train_set[order[k]];
        Graph<S> g;
        auto enc = model.encode(g, ex.clip, cfg.dropout > 0 ? &rng : nullptr, cfg.dropout);
        auto h = model.hybrid_objective(g, enc, ex.target, cfg.ctc_weight, cfg.label_smoothing);
        const double l = double(g.scalar(h.total));
        if (!std::isfinite(l))
          fail("training diverged: non-finite loss in epoch ", epoch, " batch ", b, " (clip ", ex.clip.clip_id, ")");
        batch_loss += l;
        g.backward(g.scale(h.total, S(1.0 / double(hi - lo))));
      }
      const double norm = clip_grad_norm(model.params(), cfg.grad_clip);
      if (!std::isfinite(norm)) fail("training diverged: non-finite gradient in epoch ", epoch, " batch ", b);
      opt.step();
      loss_sum += batch_loss;
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / double(order.size());
    st.val_ver = corpus_ver(model, select, cfg.decode);
    st.val_loss = mean_loss(model, select, cfg);
    if (st.val_ver < best_ver || (st.val_ver == best_ver && st.val_loss < best_loss)) {
      best_ver = st.val_ver;
      best_loss = st.val_loss;
      best_params = model.params().values();
      res.best_epoch = epoch;
      st.improved = true;
      since_best = 0;
    } else {
      ++since_best;
    }
    res.history.push_back(st);
    if (csv) *csv << epoch << ',' << st.train_loss << ',' << st.val_ver << '\n' << std::flush;
    if (on_epoch) on_epoch(st);
    if (cfg.patience > 0 && since_best >= cfg.patience) {
      res.stopped_early = true;
      break;
    }
  }
  model.params().set_values(best_params);
  res.best_val_ver = best_ver;
  return res;
}

}  // namespace mvlip
