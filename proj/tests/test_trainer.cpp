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

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "mvlip/trainer.hpp"
#include "toy.hpp"

using namespace mvlip;

namespace {

std::vector<TrainingExample> toy_examples(const ModelConfig& cfg, int n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<TrainingExample> out;
  for (int i = 0; i < n; ++i) {
    TrainingExample ex;
    ex.clip = toy::clip(cfg, 4, seed * 100 + i);
    ex.clip.clip_id = "toy" + std::to_string(i);
    const int L = 1 + int(rng() % 2);
    for (int k = 0; k < L; ++k) {
      int l;
      do l = 1 + int(rng() % 12);
      while (!ex.target.empty() && l == ex.target.back());
      ex.target.push_back(l);
    }
    ex.clip.transcript = decode_labels(ex.target);
    out.push_back(std::move(ex));
  }
  return out;
}

TrainConfig quick(int epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 3;
  tc.learning_rate = 1e-2;
  tc.decode.beam_width = 2;
  tc.dropout = 0.1;
  return tc;
}

}  // namespace

TEST(Trainer, SameSeedSameFirstEpoch) {
  const auto cfg = toy::config(ScorerKind::location_aware, {0, 90}, 14);
  const auto data = toy_examples(cfg, 7, 1);
  auto run = [&](uint64_t seed) {
    Model<float> m(cfg, seed);
    auto tc = quick(1);
    tc.seed = seed;
    return train(m, data, {}, tc).history.at(0).train_loss;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(Trainer, CsvLogHasOneRowPerEpoch) {
  const auto cfg = toy::config(ScorerKind::additive, {0, 90}, 14);
  const auto data = toy_examples(cfg, 4, 2);
  Model<float> m(cfg, 1);
  std::ostringstream csv;
  const auto res = train(m, data, {}, quick(3), &csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "epoch,train_loss,val_ver");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
  }
  EXPECT_EQ(rows, int(res.history.size()));
}

TEST(Trainer, DivergenceNamesTheBatch) {
  const auto cfg = toy::config(ScorerKind::multiplicative, {0, 90}, 14);
  const auto data = toy_examples(cfg, 5, 3);
  Model<float> m(cfg, 1);
  m.params().get("ctc.b").value(0, 0) = std::numeric_limits<float>::quiet_NaN();
  try {
    train(m, data, {}, quick(2));
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("diverged"), std::string::npos) << msg;
    EXPECT_NE(msg.find("epoch 1 batch 0"), std::string::npos) << msg;
  }
}

TEST(Trainer, RestoresBestEpochParameters) {
  const auto cfg = toy::config(ScorerKind::location_aware, {0, 90}, 14);
  const auto data = toy_examples(cfg, 6, 4);
  const auto val = toy_examples(cfg, 3, 5);
  Model<float> m(cfg, 3);
  auto tc = quick(12);
  tc.learning_rate = 5e-2;
  tc.patience = 3;
  const auto res = train(m, data, val, tc);
  ASSERT_GE(res.best_epoch, 1);
  const auto& best = res.history.at(res.best_epoch - 1);
  EXPECT_TRUE(best.improved);
  EXPECT_EQ(res.best_val_ver, best.val_ver);
  for (const auto& h : res.history) {
    EXPECT_GE(h.val_ver, best.val_ver);
    if (h.val_ver == best.val_ver) EXPECT_GE(h.val_loss, best.val_loss);
  }
  // the model left behind is the best epoch's model
  EXPECT_EQ(corpus_ver(m, val, tc.decode), best.val_ver);
  EXPECT_EQ(mean_loss(m, val, tc), best.val_loss);
  if (res.stopped_early) {
    EXPECT_EQ(int(res.history.size()), res.best_epoch + tc.patience);
  } else {
    EXPECT_EQ(int(res.history.size()), tc.epochs);
  }
}

TEST(Trainer, EarlyStoppingAfterPatience) {
  const auto cfg = toy::config(ScorerKind::additive, {0}, 14);
  const auto data = toy_examples(cfg, 3, 6);
  Model<float> m(cfg, 1);
  auto tc = quick(50);
  tc.patience = 2;
  tc.dropout = 0;
  tc.learning_rate = 1.0;  // far too large: validation stops improving quickly
  const auto res = train(m, data, {}, tc);
  ASSERT_TRUE(res.stopped_early);
  EXPECT_EQ(int(res.history.size()), res.best_epoch + 2);
  for (size_t k = res.best_epoch; k < res.history.size(); ++k) EXPECT_FALSE(res.history[k].improved);
}

TEST(Trainer, RejectsBadConfig) {
  const auto cfg = toy::config(ScorerKind::additive, {0}, 14);
  Model<float> m(cfg, 1);
  const auto data = toy_examples(cfg, 2, 7);
  auto tc = quick(1);
  tc.learning_rate = 0;
  EXPECT_THROW(train(m, data, {}, tc), Error);
  tc = quick(1);
  tc.ctc_weight = 1.5;
  EXPECT_THROW(train(m, data, {}, tc), Error);
  EXPECT_THROW(train(m, {}, {}, quick(1)), Error);
  const auto j = nlohmann::json(quick(4));
  EXPECT_EQ(nlohmann::json(j.get<TrainConfig>()), j);
}

TEST(Adam, MatchesTextbookUpdate) {
  ParamSet<double> ps;
  ps.add("w", Matrix<double>::Constant(1, 3, 0.5));
  Adam<double> opt(ps, 0.01, 0.9, 0.999, 1e-8);
  std::vector<double> w(3, 0.5), m(3, 0), v(3, 0);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> d(0, 1);
  for (int t = 1; t <= 6; ++t) {
    for (int i = 0; i < 3; ++i) {
      const double g = d(rng);
      ps.get("w").grad(0, i) = g;
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
    opt.step();
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(ps.get("w").value(0, i), w[i], 1e-12);
  }
  EXPECT_EQ(opt.steps(), 6);
}

TEST(Adam, GlobalNormClipping) {
  ParamSet<double> ps;
  ps.add("a", Matrix<double>::Zero(1, 2));
  ps.add("b", Matrix<double>::Zero(2, 1));
  ps.get("a").grad << 3, 4;
  ps.get("b").grad << 12, 0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 5.0), 13.0);
  EXPECT_NEAR(std::sqrt(ps.get("a").grad.squaredNorm() + ps.get("b").grad.squaredNorm()), 5.0, 1e-12);
  EXPECT_NEAR(ps.get("b").grad(0, 0), 12.0 * 5 / 13, 1e-12);
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 10.0), 5.0);
  EXPECT_NEAR(ps.get("a").grad(0, 1), 4.0 * 5 / 13, 1e-12);
}

TEST(Checkpoint, ReloadIsBitExact) {
  const auto cfg = toy::config(ScorerKind::location_aware, {0, 45, 90}, 14);
  Model<float> m(cfg, 8);
  toy::jitter(m.params(), 3);
  const auto path = (std::filesystem::temp_directory_path() / ("mvlip_ckpt_" + std::to_string(::getpid()))).string();
  m.save(path, nlohmann::json{{"note", "x"}});
  nlohmann::json extra;
  auto r = Model<float>::load(path, &extra);
  EXPECT_EQ(extra["note"], "x");
  EXPECT_EQ(nlohmann::json(r.config()), nlohmann::json(cfg));
  ASSERT_EQ(r.params().size(), m.params().size());
  for (size_t i = 0; i < m.params().size(); ++i) {
    EXPECT_EQ(r.params()[i].name, m.params()[i].name);
    EXPECT_TRUE((r.params()[i].value.array() == m.params()[i].value.array()).all()) << m.params()[i].name;
  }
  const auto clip = toy::clip(cfg, 5, 1);
  EXPECT_TRUE((r.ctc_posteriors(clip).array() == m.ctc_posteriors(clip).array()).all());
  std::filesystem::remove(path);
}
