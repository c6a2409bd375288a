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

// Per-view spatiotemporal encoder: a VGG-style 3x3 conv stack with spatial
// pooling only (one feature vector per frame) followed by a bidirectional
// LSTM. Every view owns a separate parameter set.

#include <random>
#include <string>
#include <vector>

#include "mvlip/autograd.hpp"
#include "mvlip/config.hpp"
#include "mvlip/dataio.hpp"
#include "mvlip/params.hpp"

namespace mvlip {

inline std::string view_prefix(int angle) { return "enc." + std::to_string(angle) + "."; }

template <class S>
void register_view_encoder(ParamSet<S>& ps, const ModelConfig& cfg, int angle, std::mt19937_64& rng) {
  const std::string pre = view_prefix(angle);
  int cin = cfg.channels;
  for (size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const int cout = cfg.conv_channels[i];
    ps.add(pre + "conv" + std::to_string(i) + ".w", init::he_normal<S>(cout, cin * 9, cin * 9, rng));
    ps.add(pre + "conv" + std::to_string(i) + ".b", init::zeros<S>(1, cout));
    cin = cout;
  }
  const int H = cfg.cell_size, I = cfg.conv_dim();
  for (const char* dir : {"fw", "bw"}) {
    const std::string p = pre + dir + ".";
    ps.add(p + "wx", init::uniform_fan_in<S>(I, 4 * H, H, rng));
    ps.add(p + "wh", init::uniform_fan_in<S>(H, 4 * H, H, rng));
    Matrix<S> b = init::zeros<S>(1, 4 * H);
    b.middleCols(H, H).setOnes();  // forget gate bias
    ps.add(p + "b", std::move(b));
  }
}

/// Frames (T x H x W x C) to one channel-major row per frame.
template <class S>
Matrix<S> frames_to_matrix(const FrameTensor& f) {
  Matrix<S> m(f.T, f.C * f.H * f.W);
  for (int t = 0; t < f.T; ++t)
    for (int c = 0; c < f.C; ++c)
      for (int y = 0; y < f.H; ++y)
        for (int x = 0; x < f.W; ++x) m(t, (c * f.H + y) * f.W + x) = S(f.at(t, y, x, c));
  return m;
}

/// Graph handles for one encoded view.
struct ViewEncoding {
  int angle = 0;
  Var conv_features;  // T x conv_dim   (f_t)
  Var features;       // T x 2*cell     (h_t)
  Var final_hidden;   // 1 x 2*cell: forward state after the last frame, backward state after the first
};

/// Runs the encoder of view `angle` on `frames` (T x C*H*W). Dropout with
/// rate `dropout` (cfg.dropout when negative) is applied when `rng` is non-null.
template <class S>
ViewEncoding encode_view(Graph<S>& g, Var frames, int angle, ParamSet<S>& ps, const ModelConfig& cfg,
                         std::mt19937_64* rng = nullptr, double dropout = -1) {
  const S rate = S(dropout < 0 ? cfg.dropout : dropout);
  const std::string pre = view_prefix(angle);
  if (!ps.contains(pre + "conv0.w")) fail("model has no encoder for view ", angle);
  ImageShape shape{cfg.channels, cfg.height, cfg.width};
  if (g.cols(frames) != shape.size())
    fail("view ", angle, ": frame size ", g.cols(frames), " does not match the configured ", cfg.channels, "x",
         cfg.height, "x", cfg.width);
  if (g.rows(frames) < 1) fail("view ", angle, ": no frames");
  Var x = frames;
  const size_t L = cfg.conv_channels.size();
  for (size_t i = 0; i < L; ++i) {
    const std::string p = pre + "conv" + std::to_string(i);
    x = g.relu(g.conv2d(x, g.param(ps.get(p + ".w")), g.param(ps.get(p + ".b")), shape));
    shape.channels = cfg.conv_channels[i];
    if (i + 1 < L) {
      x = g.maxpool2(x, shape);
      shape.height /= 2;
      shape.width /= 2;
    }
  }
  ViewEncoding out;
  out.angle = angle;
  out.conv_features = g.global_avg_pool(x, shape);
  Var f = rng ? g.dropout(out.conv_features, rate, *rng) : out.conv_features;
  auto lstm = [&](const char* dir, bool reverse) {
    const std::string p = pre + dir + ".";
    return g.lstm_sequence(f, g.param(ps.get(p + "wx")), g.param(ps.get(p + "wh")), g.param(ps.get(p + "b")),
                           reverse);
  };
  Var fw = lstm("fw", false), bw = lstm("bw", true);
  Var h = g.concat_cols({fw, bw});
  const int T = g.rows(h);
  out.final_hidden = g.concat_cols({g.row(fw, T - 1), g.row(bw, 0)});
  out.features = rng ? g.dropout(h, rate, *rng) : h;
  return out;
}

}  // namespace mvlip
