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


// Attention-driven per-frame downscaling and the uniform baseline matched to
// the same pixel budget. Degraded frames are resampled back to the original
// canvas; plans keep the true reduced resolutions for size accounting.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/analysis.hpp"
#include "mvlip/dataio.hpp"

namespace mvlip {

struct FramePlan {
  double a_cum = 1;
  int h_new = 0, w_new = 0;
};

struct CompressionPlan {
  std::string clip_id;
  std::string mode = "attention";  // or "uniform"
  int height = 0, width = 0;       // original size, shared by every frame
  std::vector<FramePlan> frames;

  long long original_pixels() const { return (long long)height * width * (long long)frames.size(); }
  long long kept_pixels() const {
    long long n = 0;
    for (const auto& f : frames) n += (long long)f.h_new * f.w_new;
    return n;
  }
};

inline int round_half_up(double x) { return int(std::floor(x + 0.5)); }

/// Side length for importance a: round(d / 2 * (1 + a)).
inline int scaled_side(int d, double a) { return round_half_up(d / 2.0 * (1.0 + a)); }

inline CompressionPlan plan(const FrameImportance& fi, int height, int width) {
  if (height < 1 || width < 1) fail("frame size must be positive");
  CompressionPlan p;
  p.clip_id = fi.clip_id;
  p.height = height;
  p.width = width;
  for (int t = 0; t < fi.T(); ++t) {
    const double a = fi.normalized[t];
    if (!(a >= 0 && a <= 1)) fail("a_cum[", t, "] = ", a, " outside [0,1]");
    p.frames.push_back({a, scaled_side(height, a), scaled_side(width, a)});
  }
  return p;
}

/// Fraction of pixels removed: 1 - kept / original.
inline double compression_factor(const CompressionPlan& p) {
  if (p.frames.empty()) return 0.0;
  return 1.0 - double(p.kept_pixels()) / double(p.original_pixels());
}

/// Bilinear resize with half-pixel centres and edge clamping.
inline void resize_bilinear(const float* src, int sh, int sw, float* dst, int dh, int dw) {
  const double sy_scale = double(sh) / dh, sx_scale = double(sw) / dw;
  for (int y = 0; y < dh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy_scale - 0.5, 0.0, double(sh - 1));
    const int y0 = int(fy), y1 = std::min(y0 + 1, sh - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx_scale - 0.5, 0.0, double(sw - 1));
      const int x0 = int(fx), x1 = std::min(x0 + 1, sw - 1);
      const double wx = fx - x0;
      const double top = src[y0 * sw + x0] * (1 - wx) + src[y0 * sw + x1] * wx;
      const double bot = src[y1 * sw + x0] * (1 - wx) + src[y1 * sw + x1] * wx;
      dst[y * dw + x] = float(top * (1 - wy) + bot * wy);
    }
  }
}

/// Downscales each frame to its planned size and back to the canvas.
inline FrameTensor apply_plan(const FrameTensor& in, const CompressionPlan& p) {
  if (in.T != int(p.frames.size()) || in.H != p.height || in.W != p.width)
    fail("plan for ", p.frames.size(), " frames of ", p.height, "x", p.width, " does not match clip of ", in.T,
         " frames of ", in.H, "x", in.W);
  if (in.C != 1) fail("compression expects single channel frames");
  FrameTensor out = in;
  std::vector<float> small;
  for (int t = 0; t < in.T; ++t) {
    const auto& f = p.frames[t];
    if (f.h_new < 1 || f.w_new < 1 || f.h_new > in.H || f.w_new > in.W)
      fail("frame ", t, ": target ", f.h_new, "x", f.w_new, " outside 1..", in.H, "x", in.W);
    if (f.h_new == in.H && f.w_new == in.W) continue;
    const float* src = in.data.data() + t * in.frame_size();
    small.resize(size_t(f.h_new) * f.w_new);
    resize_bilinear(src, in.H, in.W, small.data(), f.h_new, f.w_new);
    resize_bilinear(small.data(), f.h_new, f.w_new, out.data.data() + t * out.frame_size(), in.H, in.W);
  }
  return out;
}

/// Uniform plan removing `target_factor` of the pixels with one global scale
/// s = sqrt(1 - factor). Per-frame sides are rounded to whichever of
/// floor/ceil keeps the running pixel total closest to the budget.
inline CompressionPlan uniform_plan(const std::string& clip_id, int T, int height, int width, double target_factor) {
  if (!(target_factor >= 0 && target_factor < 0.75))
    fail("uniform factor ", target_factor, " outside [0, 0.75): the half resolution floor caps removal below 75%");
  const double s = std::sqrt(1.0 - target_factor);
  CompressionPlan p;
  p.clip_id = clip_id;
  p.mode = "uniform";
  p.height = height;
  p.width = width;
  double carry = 0;
  for (int t = 0; t < T; ++t) {
    const double want = s * s * height * width + carry;
    const int h0 = std::max(1, int(std::floor(height * s))), w0 = std::max(1, int(std::floor(width * s)));
    const int h1 = std::min(height, h0 + 1), w1 = std::min(width, w0 + 1);
    FramePlan best{1 - target_factor, h0, w0};
    double err = std::abs(want - double(h0) * w0);
    for (auto [h, w] : {std::pair{h0, w1}, std::pair{h1, w0}, std::pair{h1, w1}}) {
      const double e = std::abs(want - double(h) * w);
      if (e < err) err = e, best.h_new = h, best.w_new = w;
    }
    carry = want - double(best.h_new) * best.w_new;
    p.frames.push_back(best);
  }
  return p;
}

struct UniformBaseline {
  FrameTensor frames;
  CompressionPlan plan;
};

inline UniformBaseline uniform_baseline(const FrameTensor& in, double target_factor, const std::string& clip_id = "") {
  UniformBaseline b{{}, uniform_plan(clip_id, in.T, in.H, in.W, target_factor)};
  b.frames = apply_plan(in, b.plan);
  return b;
}

inline nlohmann::json plan_to_json(const CompressionPlan& p) {
  nlohmann::ordered_json j;
  j["clip_id"] = p.clip_id;
  j["mode"] = p.mode;
  j["height"] = p.height;
  j["width"] = p.width;
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const auto& f : p.frames) frames.push_back({{"a_cum", f.a_cum}, {"h_new", f.h_new}, {"w_new", f.w_new}});
  j["frames"] = frames;
  j["original_pixels"] = p.original_pixels();
  j["kept_pixels"] = p.kept_pixels();
  j["compression_factor"] = compression_factor(p);
  return j;
}

inline CompressionPlan plan_from_json(const nlohmann::json& j) {
  CompressionPlan p;
  p.clip_id = j.value("clip_id", std::string());
  p.mode = j.value("mode", std::string("attention"));
  p.height = j.at("height").get<int>();
  p.width = j.at("width").get<int>();
  for (const auto& f : j.at("frames")) p.frames.push_back({f.at("a_cum"), f.at("h_new"), f.at("w_new")});
  return p;
}

}  // namespace mvlip
