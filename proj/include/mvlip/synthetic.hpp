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

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "mvlip/common.hpp"
#include "mvlip/dataio.hpp"
#include "mvlip/vocab.hpp"

#ifndef MVLIP_DATA_DIR
#define MVLIP_DATA_DIR "data"
#endif

namespace mvlip {

inline std::string default_data_path(const std::string& file) { return std::string(MVLIP_DATA_DIR) + "/" + file; }

struct MouthShape {
  double aperture = 0, width = 0, protrusion = 0, teeth = 0, tongue = 0;

  MouthShape blend(const MouthShape& o, double w) const {
    auto mix = [w](double a, double b) { return (1 - w) * a + w * b; };
    return {mix(aperture, o.aperture), mix(width, o.width), mix(protrusion, o.protrusion), mix(teeth, o.teeth),
            mix(tongue, o.tongue)};
  }
};

using ShapeTable = std::map<std::string, MouthShape>;

inline ShapeTable load_shape_table(const std::string& path = default_data_path("viseme_shapes.tsv")) {
  std::ifstream in(path);
  if (!in) fail("cannot open shape table ", path);
  ShapeTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name;
    MouthShape s;
    if (!(ss >> name >> s.aperture >> s.width >> s.protrusion >> s.teeth >> s.tongue))
      fail(path, ":", lineno, ": expected viseme and five numbers");
    if (!is_viseme_class(name)) fail(path, ":", lineno, ": unknown viseme ", name);
    table[name] = s;
  }
  for (auto v : kVisemeClasses)
    if (!table.count(std::string(v))) fail(path, ": no shape for viseme ", v);
  return table;
}

/// Per-speaker nuisance parameters.
struct SpeakerStyle {
  double cx = 0, cy = 0, scale = 1, skin = 0.55;
};

/// Renders one mouth shape seen from `angle` degrees onto an HxW single
/// channel canvas with 2x2 supersampling.
inline void render_mouth(const MouthShape& m, int angle, const SpeakerStyle& st, int H, int W, float* out) {
  const double th = angle * std::numbers::pi / 180.0;
  const double ct = std::cos(th), sn = std::sin(th);
  const double a = st.scale * ((0.16 + 0.16 * m.width) * ct + (0.10 + 0.14 * m.protrusion) * sn);
  const double b_in = st.scale * (0.015 + 0.14 * m.aperture);
  const double lip = st.scale * (0.045 + 0.05 * m.protrusion * sn);
  const double a_in = 0.78 * a;
  const double shift = 0.12 * m.protrusion * sn * st.scale;
  const double cx = st.cx + shift, cy = st.cy;
  const double bump_r = st.scale * (0.03 + 0.07 * m.protrusion) * sn;
  const double bump_cx = cx + a + 0.35 * bump_r;
  const double teeth = m.teeth * ct;
  const double tongue = m.tongue * (0.35 + 0.65 * ct);

  auto shade = [&](double u, double v) {
    double val = st.skin;
    const double du = u - cx, dv = v - cy;
    const double outer = (du * du) / ((a + lip) * (a + lip)) + (dv * dv) / ((b_in + lip) * (b_in + lip));
    if (bump_r > 1e-6) {
      const double bu = u - bump_cx;
      if (bu * bu + dv * dv < bump_r * bump_r) val = 0.3;
    }
    if (outer < 1.0) val = 0.3;
    const double inner = (du * du) / (a_in * a_in) + (dv * dv) / (b_in * b_in);
    if (inner < 1.0) {
      val = 0.06;
      if (std::abs(dv + 0.45 * b_in) < 0.35 * b_in) val = 0.06 + 0.86 * teeth;
      if (dv > 0.15 * b_in && du * du + (dv - b_in) * (dv - b_in) < (0.7 * a_in) * (0.7 * a_in))
        val = (1 - tongue) * val + tongue * 0.5;
    }
    return val;
  };

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double acc = 0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          double u = (x + 0.25 + 0.5 * sx) / W - 0.5;
          double v = (y + 0.25 + 0.5 * sy) / H - 0.5;
          acc += shade(u, v);
        }
      out[size_t(y) * W + x] = float(acc / 4);
    }
}

struct SyntheticConfig {
  int num_clips = 30;
  std::vector<int> views{0, 30, 45, 60, 90};
  int t_min = 8, t_max = 14;
  VisemeSequence vocab{kVisemeClasses.begin(), kVisemeClasses.end()};
  double noise_level = 0.03;
  uint64_t seed = 7;
  int height = 64, width = 64;
  double val_fraction = 0.0, test_fraction = 0.0;
  double word_break_prob = 0.3;
  std::string shape_table = default_data_path("viseme_shapes.tsv");

  void validate() const {
    if (num_clips < 1) fail("num_clips must be positive");
    if (views.empty()) fail("at least one view required");
    for (int v : views)
      if (!is_supported_view(v)) fail("invalid view angle ", v);
    if (t_min < 2 || t_max < t_min) fail("T range [", t_min, ",", t_max, "] is empty (need 2 <= t_min <= t_max)");
    if (vocab.size() < 2) fail("synthetic vocabulary needs at least two visemes");
    for (const auto& v : vocab)
      if (!is_viseme_class(v)) fail("unknown viseme ", v, " in synthetic vocabulary");
    if (height < 8 || width < 8) fail("frame size must be at least 8x8");
  }
};

/// Timing of one rendered utterance: viseme per segment and its length in frames.
struct SegmentPlan {
  VisemeSequence visemes;
  std::vector<int> durations;
  std::vector<int> word_starts;  // segment indices that begin a new word (excluding 0)

  int T() const {
    int t = 0;
    for (int d : durations) t += d;
    return t;
  }

  FrameAlignment alignment(const std::string& clip_id) const {
    FrameAlignment a;
    a.clip_id = clip_id;
    int t = 0;
    for (size_t s = 0; s < visemes.size(); ++s) {
      if (std::find(word_starts.begin(), word_starts.end(), int(s)) != word_starts.end()) a.word_boundaries.push_back(t);
      for (int k = 0; k < durations[s]; ++k, ++t) a.labels.push_back(visemes[s]);
    }
    return a;
  }
};

/// Renders every configured view of a planned utterance.
inline MultiViewClip render_clip(const std::string& clip_id, const SegmentPlan& plan, const std::vector<int>& views,
                                 const ShapeTable& shapes, const SpeakerStyle& style, int H, int W, double noise,
                                 std::mt19937_64& rng) {
  MultiViewClip clip;
  clip.clip_id = clip_id;
  clip.transcript = plan.visemes;
  const int T = plan.T();
  std::vector<MouthShape> per_frame;
  per_frame.reserve(T);
  for (size_t s = 0; s < plan.visemes.size(); ++s) {
    const MouthShape& cur = shapes.at(plan.visemes[s]);
    for (int k = 0; k < plan.durations[s]; ++k) {
      // onset frame is half way from the previous viseme (coarticulation)
      if (k == 0 && s > 0)
        per_frame.push_back(shapes.at(plan.visemes[s - 1]).blend(cur, 0.5));
      else
        per_frame.push_back(cur);
    }
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.008, 0.008);
  for (int angle : views) {
    FrameTensor ft(T, H, W, 1);
    for (int t = 0; t < T; ++t) {
      SpeakerStyle st = style;
      st.cx += jitter(rng);
      st.cy += jitter(rng);
      float* frame = ft.data.data() + size_t(t) * H * W;
      render_mouth(per_frame[t], angle, st, H, W, frame);
      if (noise > 0)
        for (int i = 0; i < H * W; ++i) frame[i] = float(frame[i] + noise * gauss(rng));
      for (int i = 0; i < H * W; ++i) frame[i] = quantize_sample(frame[i]) / 255.f;
    }
    clip.views.emplace(angle, std::move(ft));
  }
  return clip;
}

inline SegmentPlan sample_plan(const SyntheticConfig& cfg, std::mt19937_64& rng) {
  SegmentPlan p;
  const int T = std::uniform_int_distribution<int>(cfg.t_min, cfg.t_max)(rng);
  const int lo = std::max(1, (T + 3) / 4), hi = std::max(1, T / 2);
  const int L = std::uniform_int_distribution<int>(lo, std::max(lo, hi))(rng);
  p.durations.assign(L, T / L >= 2 ? 2 : 1);
  int rest = T - std::accumulate(p.durations.begin(), p.durations.end(), 0);
  std::uniform_int_distribution<int> pick_seg(0, L - 1);
  for (; rest > 0; --rest) ++p.durations[pick_seg(rng)];
  std::uniform_int_distribution<size_t> pick_vis(0, cfg.vocab.size() - 1);
  std::bernoulli_distribution word_break(cfg.word_break_prob);
  for (int s = 0; s < L; ++s) {
    std::string v;
    do v = cfg.vocab[pick_vis(rng)];
    while (s > 0 && v == p.visemes.back());
    p.visemes.push_back(v);
    if (s > 0 && word_break(rng)) p.word_starts.push_back(s);
  }
  return p;
}

inline SpeakerStyle sample_style(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> off(-0.03, 0.03), sc(0.93, 1.07), skin(0.5, 0.62);
  SpeakerStyle st;
  st.cx = off(rng);
  st.cy = off(rng);
  st.scale = sc(rng);
  st.skin = skin(rng);
  return st;
}

/// Writes `clips/*.vlns`, `align/*.csv` and `manifest.jsonl` under out_dir and
/// returns the manifest. Output is a pure function of the config.
inline DatasetManifest generate_synthetic(const SyntheticConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const ShapeTable shapes = load_shape_table(cfg.shape_table);
  fs::create_directories(out_dir / "clips");
  fs::create_directories(out_dir / "align");
  std::mt19937_64 rng(cfg.seed);
  const int n_test = int(std::round(cfg.test_fraction * cfg.num_clips));
  const int n_val = int(std::round(cfg.val_fraction * cfg.num_clips));
  DatasetManifest m;
  m.base_dir = out_dir;
  for (int i = 0; i < cfg.num_clips; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "syn%05d", i);
    SegmentPlan plan = sample_plan(cfg, rng);
    SpeakerStyle style = sample_style(rng);
    MultiViewClip clip = render_clip(id, plan, cfg.views, shapes, style, cfg.height, cfg.width, cfg.noise_level, rng);
    ManifestRecord r;
    r.clip_id = id;
    r.transcript = plan.visemes;
    for (const auto& [angle, frames] : clip.views) {
      std::string rel = "clips/" + std::string(id) + "_v" + std::to_string(angle) + ".vlns";
      save_tensor((out_dir / rel).string(), frames);
      r.views[angle] = rel;
    }
    std::string arel = "align/" + std::string(id) + ".csv";
    save_alignment((out_dir / arel).string(), plan.alignment(id));
    r.alignment = arel;
    r.split = i < cfg.num_clips - n_test - n_val ? "train" : (i < cfg.num_clips - n_test ? "val" : "test");
    m.records.push_back(std::move(r));
  }
  save_manifest((out_dir / "manifest.jsonl").string(), m);
  return m;
}

}  // namespace mvlip
