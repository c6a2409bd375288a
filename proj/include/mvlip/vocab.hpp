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
#include <array>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mvlip/common.hpp"

namespace mvlip {

using VisemeSequence = std::vector<std::string>;
using LabelIds = std::vector<int>;

inline constexpr std::array<std::string_view, 12> kVisemeClasses = {
    "V1", "V2", "V3", "V4", "A", "B", "C", "D", "E", "F", "G", "H"};

inline constexpr int kNumVisemeClasses = 12;

/// The fixed 14-symbol output vocabulary: CTC blank at id 0, the twelve
/// viseme classes at ids 1..12, and the combined start/end token at id 13.
class Vocabulary {
 public:
  Vocabulary() {
    symbols_.emplace_back("[blank]");
    for (auto s : kVisemeClasses) symbols_.emplace_back(s);
    symbols_.emplace_back("[sos/eos]");
    for (int i = 0; i < size(); ++i) index_.emplace(symbols_[i], i);
  }

  int size() const { return static_cast<int>(symbols_.size()); }
  int blank_id() const { return 0; }
  int sos_eos_id() const { return size() - 1; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool contains(const std::string& symbol) const { return index_.count(symbol) > 0; }

  /// True for ids that name a viseme class (neither blank nor sos/eos).
  bool is_viseme(int id) const { return id > blank_id() && id < sos_eos_id(); }

  /// Position of a viseme id among the 12 classes (0..11).
  int class_index(int id) const {
    if (!is_viseme(id)) fail("id ", id, " is not a viseme class");
    return id - 1;
  }

  int id(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) fail("unknown symbol ", symbol);
    return it->second;
  }

  const std::string& symbol(int id) const {
    if (id < 0 || id >= size()) fail("label id ", id, " out of range");
    return symbols_[id];
  }

  LabelIds encode(const VisemeSequence& seq) const {
    LabelIds out;
    out.reserve(seq.size());
    for (const auto& s : seq) out.push_back(id(s));
    return out;
  }

  VisemeSequence decode(const LabelIds& ids) const {
    VisemeSequence out;
    out.reserve(ids.size());
    for (int i : ids) out.push_back(symbol(i));
    return out;
  }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

inline const Vocabulary& build_vocabulary() {
  static const Vocabulary vocab;
  return vocab;
}

inline bool is_viseme_class(std::string_view s) {
  return std::find(kVisemeClasses.begin(), kVisemeClasses.end(), s) != kVisemeClasses.end();
}

/// Many-to-one phoneme -> viseme class table.
class PhonemeVisemeMap {
 public:
  PhonemeVisemeMap() = default;

  void add(const std::string& phoneme, const std::string& viseme) {
    if (!is_viseme_class(viseme)) fail("phoneme ", phoneme, " maps to unknown viseme ", viseme);
    if (!entries_.emplace(phoneme, viseme).second) fail("phoneme ", phoneme, " listed twice");
  }

  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Parses `phoneme<TAB>viseme` lines; blank lines and `#` comments are skipped.
  static PhonemeVisemeMap parse(std::istream& in, const std::string& origin = "<stream>") {
    PhonemeVisemeMap map;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
        fail(origin, ":", lineno, ": expected phoneme<TAB>viseme");
      std::string phoneme = line.substr(0, tab), viseme = line.substr(tab + 1);
      auto trim = [](std::string& s) {
        s.erase(0, s.find_first_not_of(' '));
        s.erase(s.find_last_not_of(' ') + 1);
      };
      trim(phoneme);
      trim(viseme);
      try {
        map.add(phoneme, viseme);
      } catch (const Error& e) {
        fail(origin, ":", lineno, ": ", e.what());
      }
    }
    return map;
  }

  static PhonemeVisemeMap load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("cannot open phoneme map ", path);
    return parse(in, path);
  }

 private:
  std::map<std::string, std::string> entries_;
};

/// Merges consecutive duplicates.
inline VisemeSequence collapse_repeats(const VisemeSequence& seq) {
  VisemeSequence out;
  for (const auto& s : seq)
    if (out.empty() || out.back() != s) out.push_back(s);
  return out;
}

inline VisemeSequence phonemes_to_visemes(const std::vector<std::string>& phonemes,
                                          const PhonemeVisemeMap& map, bool collapse = false) {
  VisemeSequence out;
  out.reserve(phonemes.size());
  for (size_t i = 0; i < phonemes.size(); ++i) {
    auto it = map.entries().find(phonemes[i]);
    if (it == map.entries().end()) fail("unknown phoneme ", phonemes[i], " at ", i);
    out.push_back(it->second);
  }
  return collapse ? collapse_repeats(out) : out;
}

inline LabelIds encode_labels(const VisemeSequence& seq, const Vocabulary& vocab = build_vocabulary()) {
  return vocab.encode(seq);
}

inline VisemeSequence decode_labels(const LabelIds& ids, const Vocabulary& vocab = build_vocabulary()) {
  return vocab.decode(ids);
}

}  // namespace mvlip
