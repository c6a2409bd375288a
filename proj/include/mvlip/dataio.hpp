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

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/common.hpp"
#include "mvlip/vocab.hpp"

namespace mvlip {

namespace fs = std::filesystem;

/// Frames of one view, T x H x W x C, samples in [0,1], row-major.
struct FrameTensor {
  int T = 0, H = 0, W = 0, C = 0;
  std::vector<float> data;

  FrameTensor() = default;
  FrameTensor(int t, int h, int w, int c) : T(t), H(h), W(w), C(c), data(size_t(t) * h * w * c, 0.f) {}

  size_t frame_size() const { return size_t(H) * W * C; }
  float& at(int t, int y, int x, int c = 0) { return data[((size_t(t) * H + y) * W + x) * C + c]; }
  float at(int t, int y, int x, int c = 0) const { return data[((size_t(t) * H + y) * W + x) * C + c]; }
  bool same_shape(const FrameTensor& o) const { return T == o.T && H == o.H && W == o.W && C == o.C; }
};

inline constexpr char kTensorMagic[4] = {'V', 'L', 'N', 'S'};

namespace detail {
inline void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail("truncated header");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}
}  // namespace detail

inline uint8_t quantize_sample(float v) {
  float c = std::clamp(v, 0.f, 1.f);
  return static_cast<uint8_t>(std::floor(c * 255.f + 0.5f));
}

/// Container layout: "VLNS", u32 T, H, W, C (little endian), then T*H*W*C
/// unsigned 8-bit samples in row-major order.
inline void write_tensor(std::ostream& out, const FrameTensor& t) {
  out.write(kTensorMagic, 4);
  for (int d : {t.T, t.H, t.W, t.C}) detail::put_u32(out, uint32_t(d));
  std::vector<char> bytes(t.data.size());
  for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(quantize_sample(t.data[i]));
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

inline void save_tensor(const std::string& path, const FrameTensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write ", path);
  write_tensor(out, t);
}

inline FrameTensor read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) fail("bad tensor magic");
  uint32_t dims[4];
  for (auto& d : dims) d = detail::get_u32(in);
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[3] == 0) fail("tensor has a zero dimension");
  FrameTensor t{int(dims[0]), int(dims[1]), int(dims[2]), int(dims[3])};
  std::vector<unsigned char> bytes(t.data.size());
  if (!in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()))) fail("truncated tensor body");
  for (size_t i = 0; i < bytes.size(); ++i) t.data[i] = bytes[i] / 255.f;
  return t;
}

inline FrameTensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open tensor file ", path);
  try {
    return read_tensor(in);
  } catch (const Error& e) {
    fail(path, ": ", e.what());
  }
}

/// Synchronized frames for up to five camera angles of one utterance.
struct MultiViewClip {
  std::string clip_id;
  std::map<int, FrameTensor> views;  // keyed by angle, iteration order = sorted angles
  VisemeSequence transcript;

  int T() const { return views.empty() ? 0 : views.begin()->second.T; }

  std::vector<int> angles() const {
    std::vector<int> a;
    for (const auto& [k, _] : views) a.push_back(k);
    return a;
  }

  void validate() const {
    if (views.empty()) fail("clip ", clip_id, " has no views");
    const auto& ref = views.begin()->second;
    if (ref.T < 1) fail("clip ", clip_id, " has no frames");
    for (const auto& [angle, t] : views) {
      if (!is_supported_view(angle)) fail("clip ", clip_id, ": unsupported view angle ", angle);
      if (!t.same_shape(ref)) fail("clip ", clip_id, ": view ", angle, " shape differs from the others");
    }
  }
};

/// Per-frame viseme labels from an external forced aligner.
struct FrameAlignment {
  std::string clip_id;
  VisemeSequence labels;
  std::vector<int> word_boundaries;  // frame indices that start a new word (never 0)

  int T() const { return int(labels.size()); }

  /// Lengths of the words delimited by the boundaries.
  std::vector<int> word_lengths() const {
    std::vector<int> out;
    int start = 0;
    for (int b : word_boundaries) {
      out.push_back(b - start);
      start = b;
    }
    out.push_back(T() - start);
    return out;
  }

  /// Word index of every frame.
  std::vector<int> word_of_frame() const {
    std::vector<int> out(labels.size(), 0);
    size_t w = 0;
    for (int t = 0; t < T(); ++t) {
      while (w < word_boundaries.size() && word_boundaries[w] <= t) ++w;
      out[t] = int(w);
    }
    return out;
  }
};

/// CSV rows `frame_index,viseme[,word_boundary_flag]`, optional header.
inline FrameAlignment parse_alignment(std::istream& in, const std::string& origin,
                                      std::optional<int> expected_T = std::nullopt) {
  FrameAlignment a;
  a.clip_id = fs::path(origin).stem().string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("frame_index", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2 || cells.size() > 3) fail(origin, ":", lineno, ": expected 2 or 3 columns");
    int idx = -1;
    try {
      idx = std::stoi(cells[0]);
    } catch (const std::exception&) {
      fail(origin, ":", lineno, ": bad frame index '", cells[0], "'");
    }
    if (idx != a.T()) fail(origin, ":", lineno, ": frame index ", idx, " out of sequence (expected ", a.T(), ")");
    if (!is_viseme_class(cells[1])) fail(origin, ":", lineno, ": unknown viseme ", cells[1]);
    if (cells.size() == 3) {
      if (cells[2] == "1") {
        if (idx > 0) a.word_boundaries.push_back(idx);
      } else if (cells[2] != "0" && !cells[2].empty()) {
        fail(origin, ":", lineno, ": bad word boundary flag '", cells[2], "'");
      }
    }
    a.labels.push_back(cells[1]);
  }
  if (a.labels.empty()) fail(origin, ": empty alignment");
  if (expected_T && *expected_T != a.T())
    fail(origin, ": alignment has ", a.T(), " frames but clip has ", *expected_T);
  return a;
}

inline FrameAlignment load_alignment(const std::string& path, std::optional<int> expected_T = std::nullopt) {
  std::ifstream in(path);
  if (!in) fail("cannot open alignment ", path);
  return parse_alignment(in, path, expected_T);
}

inline void save_alignment(const std::string& path, const FrameAlignment& a) {
  std::ofstream out(path);
  if (!out) fail("cannot write ", path);
  out << "frame_index,viseme,word_boundary\n";
  std::set<int> b(a.word_boundaries.begin(), a.word_boundaries.end());
  for (int t = 0; t < a.T(); ++t) out << t << ',' << a.labels[t] << ',' << (b.count(t) ? 1 : 0) << '\n';
}

struct ManifestRecord {
  std::string clip_id;
  std::map<int, std::string> views;  // angle -> tensor path, relative to the manifest
  VisemeSequence transcript;
  std::optional<std::string> alignment;
  std::string split = "train";
};

struct DatasetManifest {
  fs::path base_dir;  // directory that relative paths resolve against
  std::vector<ManifestRecord> records;

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }

  std::vector<const ManifestRecord*> split(const std::string& tag) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
      if (r.split == tag) out.push_back(&r);
    return out;
  }

  const ManifestRecord* find(const std::string& clip_id) const {
    for (const auto& r : records)
      if (r.clip_id == clip_id) return &r;
    return nullptr;
  }
};

inline nlohmann::ordered_json record_to_json(const ManifestRecord& r) {
  nlohmann::ordered_json j;
  j["clip_id"] = r.clip_id;
  nlohmann::ordered_json views = nlohmann::ordered_json::object();
  for (const auto& [angle, path] : r.views) views[std::to_string(angle)] = path;
  j["views"] = views;
  j["transcript"] = r.transcript;
  if (r.alignment) j["alignment"] = *r.alignment;
  j["split"] = r.split;
  return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.clip_id = j.at("clip_id").get<std::string>();
  if (r.clip_id.empty()) fail("empty clip_id");
  for (const auto& [key, val] : j.at("views").items()) {
    int angle = 0;
    try {
      size_t used = 0;
      angle = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      fail("bad view angle '", key, "'");
    }
    if (!is_supported_view(angle)) fail("unsupported view angle ", angle);
    r.views[angle] = val.get<std::string>();
  }
  if (r.views.empty()) fail("record has no views");
  r.transcript = j.at("transcript").get<VisemeSequence>();
  for (const auto& s : r.transcript)
    if (!is_viseme_class(s)) fail("unknown viseme ", s, " in transcript");
  if (j.contains("alignment") && !j["alignment"].is_null()) r.alignment = j["alignment"].get<std::string>();
  if (j.contains("split")) r.split = j["split"].get<std::string>();
  return r;
}

/// Parses JSON lines. When `check_files` is set every referenced path must exist.
inline DatasetManifest parse_manifest(std::istream& in, const std::string& origin, const fs::path& base_dir,
                                      bool check_files = true) {
  DatasetManifest m;
  m.base_dir = base_dir;
  std::map<std::string, int> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ManifestRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      fail(origin, ":", lineno, ": malformed record: ", e.what());
    } catch (const Error& e) {
      fail(origin, ":", lineno, ": ", e.what());
    }
    if (auto it = seen.find(r.clip_id); it != seen.end())
      fail(origin, ":", lineno, ": duplicate clip_id ", r.clip_id, " (first seen at line ", it->second, ")");
    seen.emplace(r.clip_id, lineno);
    if (check_files) {
      for (const auto& [angle, p] : r.views)
        if (!fs::exists(m.resolve(p))) fail(origin, ":", lineno, ": missing frame file ", m.resolve(p).string());
      if (r.alignment && !fs::exists(m.resolve(*r.alignment)))
        fail(origin, ":", lineno, ": missing alignment file ", m.resolve(*r.alignment).string());
    }
    m.records.push_back(std::move(r));
  }
  std::sort(m.records.begin(), m.records.end(),
            [](const ManifestRecord& a, const ManifestRecord& b) { return a.clip_id < b.clip_id; });
  return m;
}

inline DatasetManifest load_manifest(const std::string& path, bool check_files = true) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest ", path);
  return parse_manifest(in, path, fs::path(path).parent_path(), check_files);
}

inline void write_manifest(std::ostream& out, const DatasetManifest& m) {
  for (const auto& r : m.records) out << record_to_json(r).dump() << '\n';
}

inline void save_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) fail("cannot write ", path);
  write_manifest(out, m);
}

inline MultiViewClip load_clip(const DatasetManifest& m, const ManifestRecord& r) {
  MultiViewClip clip;
  clip.clip_id = r.clip_id;
  clip.transcript = r.transcript;
  for (const auto& [angle, p] : r.views) clip.views.emplace(angle, load_tensor(m.resolve(p).string()));
  clip.validate();
  return clip;
}

inline FrameAlignment load_record_alignment(const DatasetManifest& m, const ManifestRecord& r,
                                            std::optional<int> expected_T = std::nullopt) {
  if (!r.alignment) fail("clip ", r.clip_id, " has no alignment");
  auto a = load_alignment(m.resolve(*r.alignment).string(), expected_T);
  a.clip_id = r.clip_id;
  return a;
}

}  // namespace mvlip
