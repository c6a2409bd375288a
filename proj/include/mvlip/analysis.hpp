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


// Frame importance from cumulative temporal attention, important visemes of
// an utterance, and per-viseme view importance.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/attention.hpp"
#include "mvlip/dataio.hpp"

namespace mvlip {

struct FrameImportance {
  std::string clip_id;
  std::vector<double> raw;         // summed view-weighted temporal attention
  std::vector<double> normalized;  // raw / max(raw)
  int T() const { return int(raw.size()); }
};

/// raw[t] = sum_u sum_v view[u][v] * temporal[u][v][t]
inline FrameImportance cumulative_attention(const AttentionTrace& tr) {
  if (tr.steps.empty()) fail("trace of clip '", tr.clip_id, "' has no decoding steps");
  const int T = tr.num_frames();
  if (T == 0) fail("trace of clip '", tr.clip_id, "' has no frames");
  FrameImportance fi;
  fi.clip_id = tr.clip_id;
  fi.raw.assign(T, 0.0);
  for (const auto& st : tr.steps) {
    if (st.temporal.size() != st.view.size()) fail("trace step has mismatched view axes");
    for (size_t v = 0; v < st.view.size(); ++v) {
      if (int(st.temporal[v].size()) != T) fail("ragged temporal weights in trace of ", tr.clip_id);
      for (int t = 0; t < T; ++t) fi.raw[t] += st.view[v] * st.temporal[v][t];
    }
  }
  const double mx = *std::max_element(fi.raw.begin(), fi.raw.end());
  fi.normalized.resize(T);
  for (int t = 0; t < T; ++t) fi.normalized[t] = mx > 0 ? fi.raw[t] / mx : 0.0;
  return fi;
}

/// ceil(fraction * T) without floating point drift at exact multiples.
inline int top_count(double fraction, int T) {
  if (!(fraction > 0 && fraction <= 1)) fail("fraction must lie in (0,1], got ", fraction);
  const double x = fraction * T;
  const double r = std::round(x);
  const int k = std::abs(x - r) < 1e-9 ? int(r) : int(std::ceil(x));
  return std::clamp(k, 1, T);
}

/// Indices of the ceil(fraction*T) most attended frames, highest weight first,
/// ties to the earlier frame.
inline std::vector<int> top_frames(const FrameImportance& fi, double fraction = 0.3) {
  const int T = fi.T();
  if (T == 0) return {};
  const int k = top_count(fraction, T);
  std::vector<int> idx(T);
  for (int t = 0; t < T; ++t) idx[t] = t;
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return fi.raw[a] > fi.raw[b]; });
  idx.resize(k);
  return idx;
}

inline constexpr const char* kWordSeparator = ";";

/// Visemes under the selected frames in time order, one entry per aligned
/// segment, with ";" between entries that fall in different words.
inline std::vector<std::string> important_visemes(const std::vector<int>& top, const FrameAlignment& a) {
  std::vector<int> frames = top;
  std::sort(frames.begin(), frames.end());
  frames.erase(std::unique(frames.begin(), frames.end()), frames.end());
  for (int t : frames)
    if (t < 0 || t >= a.T()) fail("frame ", t, " outside the alignment of ", a.T(), " frames");
  const auto word = a.word_of_frame();
  // segment id = index of the maximal run of one viseme inside one word
  std::vector<int> seg(a.T());
  for (int t = 0; t < a.T(); ++t)
    seg[t] = t == 0 ? 0 : seg[t - 1] + (a.labels[t] != a.labels[t - 1] || word[t] != word[t - 1] ? 1 : 0);
  std::vector<std::string> out;
  int last_seg = -1, last_word = -1;
  for (int t : frames) {
    if (seg[t] == last_seg) continue;
    if (last_word >= 0 && word[t] != last_word) out.push_back(kWordSeparator);
    out.push_back(a.labels[t]);
    last_seg = seg[t];
    last_word = word[t];
  }
  return out;
}

struct ViewImportanceRow {
  std::string viseme;
  int steps = 0;                    // decoding steps that emitted this class
  std::vector<double> mean_weight;  // per angle; empty when absent
  std::vector<int> significant;     // angles with mean >= threshold * max
  bool present() const { return steps > 0; }
};

struct ViewImportanceTable {
  std::vector<int> angles;
  std::vector<ViewImportanceRow> rows;  // one per viseme class, fixed order
  const ViewImportanceRow& row(const std::string& viseme) const {
    for (const auto& r : rows)
      if (r.viseme == viseme) return r;
    fail("unknown viseme ", viseme);
  }
};

/// Averages each step's view weights by the class it emitted. All traces
/// must share the same view axis.
inline ViewImportanceTable view_importance(const std::vector<AttentionTrace>& traces, double threshold = 0.5) {
  ViewImportanceTable tab;
  bool have_axis = false;
  std::map<std::string, std::vector<double>> sums;
  std::map<std::string, int> counts;
  for (const auto& tr : traces) {
    if (!have_axis) {
      tab.angles = tr.views;
      have_axis = true;
    } else if (tr.views != tab.angles) {
      fail("trace of ", tr.clip_id, " has a different view axis");
    }
    if (tr.labels.size() != tr.steps.size())
      fail("trace of ", tr.clip_id, " pairs ", tr.labels.size(), " labels with ", tr.steps.size(), " steps");
    for (size_t u = 0; u < tr.steps.size(); ++u) {
      const auto& w = tr.steps[u].view;
      if (w.size() != tab.angles.size()) fail("trace of ", tr.clip_id, " step ", u, " has the wrong view count");
      auto& s = sums[tr.labels[u]];
      s.resize(w.size(), 0.0);
      for (size_t v = 0; v < w.size(); ++v) s[v] += w[v];
      ++counts[tr.labels[u]];
    }
  }
  for (const auto& cv : kVisemeClasses) {
    const std::string cls(cv);
    ViewImportanceRow r;
    r.viseme = cls;
    auto it = counts.find(cls);
    if (it != counts.end()) {
      r.steps = it->second;
      for (double s : sums[cls]) r.mean_weight.push_back(s / r.steps);
      const double mx = *std::max_element(r.mean_weight.begin(), r.mean_weight.end());
      for (size_t v = 0; v < r.mean_weight.size(); ++v)
        if (r.mean_weight[v] >= threshold * mx) r.significant.push_back(tab.angles[v]);
    }
    tab.rows.push_back(std::move(r));
  }
  return tab;
}

inline nlohmann::json importance_to_json(const FrameImportance& fi, const std::vector<int>& top,
                                         const std::vector<std::string>& visemes = {}) {
  nlohmann::ordered_json j;
  j["clip_id"] = fi.clip_id;
  j["raw"] = fi.raw;
  j["a_cum"] = fi.normalized;
  j["top_frames"] = top;
  if (!visemes.empty()) j["important_visemes"] = visemes;
  return j;
}

inline FrameImportance importance_from_json(const nlohmann::json& j) {
  FrameImportance fi;
  fi.clip_id = j.value("clip_id", std::string());
  fi.raw = j.at("raw").get<std::vector<double>>();
  fi.normalized = j.at("a_cum").get<std::vector<double>>();
  if (fi.raw.size() != fi.normalized.size()) fail("frame importance arrays disagree in length");
  return fi;
}

/// CSV `viseme,angle,mean_weight,significant`; absent classes carry an empty
/// weight and the flag "absent".
inline void write_view_importance_csv(std::ostream& out, const ViewImportanceTable& tab) {
  out << "viseme,angle,mean_weight,significant\n";
  for (const auto& r : tab.rows)
    for (size_t v = 0; v < tab.angles.size(); ++v) {
      out << r.viseme << ',' << tab.angles[v] << ',';
      if (!r.present()) {
        out << ",absent\n";
        continue;
      }
      const bool sig = std::find(r.significant.begin(), r.significant.end(), tab.angles[v]) != r.significant.end();
      out << r.mean_weight[v] << ',' << (sig ? 1 : 0) << '\n';
    }
}

}  // namespace mvlip
