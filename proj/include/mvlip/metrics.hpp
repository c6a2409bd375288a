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

// Viseme error rate (minimum edit distance normalized by reference length)
// and viseme confusion matrices built from the edit-distance backtrace.

#include <algorithm>
#include <array>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/common.hpp"
#include "mvlip/vocab.hpp"

namespace mvlip {

enum class EditOp { match, substitution, deletion, insertion };

struct AlignedPair {
  EditOp op;
  int ref_index = -1;  // -1 for insertions
  int hyp_index = -1;  // -1 for deletions
};

struct EditCounts {
  int insertions = 0, substitutions = 0, deletions = 0, matches = 0;
  int errors() const { return insertions + substitutions + deletions; }
};

/// Levenshtein alignment. Backtrace prefers match > substitution > deletion >
/// insertion whenever several moves reach the same optimal cost.
template <class T>
std::vector<AlignedPair> align_sequences(const std::vector<T>& hyp, const std::vector<T>& ref) {
  const size_t R = ref.size(), H = hyp.size();
  std::vector<std::vector<int>> d(R + 1, std::vector<int>(H + 1));
  for (size_t i = 0; i <= R; ++i) d[i][0] = int(i);
  for (size_t j = 0; j <= H; ++j) d[0][j] = int(j);
  for (size_t i = 1; i <= R; ++i)
    for (size_t j = 1; j <= H; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), d[i - 1][j] + 1, d[i][j - 1] + 1});
  std::vector<AlignedPair> path;
  size_t i = R, j = H;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && d[i][j] == d[i - 1][j - 1]) {
      path.push_back({EditOp::match, int(i - 1), int(j - 1)});
      --i, --j;
    } else if (i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1) {
      path.push_back({EditOp::substitution, int(i - 1), int(j - 1)});
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      path.push_back({EditOp::deletion, int(i - 1), -1});
      --i;
    } else {
      path.push_back({EditOp::insertion, -1, int(j - 1)});
      --j;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

inline EditCounts count_edits(const std::vector<AlignedPair>& path) {
  EditCounts c;
  for (const auto& p : path) switch (p.op) {
      case EditOp::match: ++c.matches; break;
      case EditOp::substitution: ++c.substitutions; break;
      case EditOp::deletion: ++c.deletions; break;
      case EditOp::insertion: ++c.insertions; break;
    }
  return c;
}

struct VerResult {
  double rate = 0;
  int insertions = 0, substitutions = 0, deletions = 0;
  int ref_length = 0;
};

inline VerResult viseme_error_rate(const VisemeSequence& hyp, const VisemeSequence& ref) {
  if (ref.empty()) fail("viseme error rate is undefined for an empty reference");
  auto c = count_edits(align_sequences(hyp, ref));
  return {double(c.errors()) / double(ref.size()), c.insertions, c.substitutions, c.deletions, int(ref.size())};
}

/// Corpus-level report: micro-averaged VER and a 12 x 12 confusion matrix
/// (rows = reference class, columns = hypothesis class).
struct EvalReport {
  double ver = 0;
  int insertions = 0, substitutions = 0, deletions = 0, matches = 0, ref_length = 0, utterances = 0;
  std::array<std::array<int, kNumVisemeClasses>, kNumVisemeClasses> confusion{};
  std::array<int, kNumVisemeClasses> inserted{};  // per hypothesis class
  std::array<int, kNumVisemeClasses> deleted{};   // per reference class

  int confusion_mass() const {
    int n = 0;
    for (const auto& r : confusion)
      for (int v : r) n += v;
    return n;
  }

  std::array<std::array<double, kNumVisemeClasses>, kNumVisemeClasses> row_normalized() const {
    std::array<std::array<double, kNumVisemeClasses>, kNumVisemeClasses> out{};
    for (int r = 0; r < kNumVisemeClasses; ++r) {
      int s = 0;
      for (int v : confusion[r]) s += v;
      for (int c = 0; c < kNumVisemeClasses; ++c) out[r][c] = s ? double(confusion[r][c]) / s : 0.0;
    }
    return out;
  }
};

inline int viseme_class_index(const std::string& s) {
  for (int i = 0; i < kNumVisemeClasses; ++i)
    if (kVisemeClasses[i] == s) return i;
  fail("unknown viseme ", s);
}

/// Pairs are (hyp, ref).
inline EvalReport evaluate(const std::vector<std::pair<VisemeSequence, VisemeSequence>>& pairs) {
  EvalReport rep;
  for (const auto& [hyp, ref] : pairs) {
    if (ref.empty()) fail("empty reference in evaluation set");
    auto path = align_sequences(hyp, ref);
    for (const auto& p : path) switch (p.op) {
        case EditOp::match:
        case EditOp::substitution:
          ++rep.confusion[viseme_class_index(ref[p.ref_index])][viseme_class_index(hyp[p.hyp_index])];
          ++(p.op == EditOp::match ? rep.matches : rep.substitutions);
          break;
        case EditOp::deletion:
          ++rep.deleted[viseme_class_index(ref[p.ref_index])];
          ++rep.deletions;
          break;
        case EditOp::insertion:
          ++rep.inserted[viseme_class_index(hyp[p.hyp_index])];
          ++rep.insertions;
          break;
      }
    rep.ref_length += int(ref.size());
    ++rep.utterances;
  }
  rep.ver = rep.ref_length ? double(rep.insertions + rep.substitutions + rep.deletions) / rep.ref_length : 0.0;
  return rep;
}

/// Same as evaluate() but only returns the pairwise confusion counts.
inline std::array<std::array<int, kNumVisemeClasses>, kNumVisemeClasses> confusion_matrix(
    const std::vector<std::pair<VisemeSequence, VisemeSequence>>& pairs) {
  return evaluate(pairs).confusion;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["ver"] = r.ver;
  j["utterances"] = r.utterances;
  j["ref_length"] = r.ref_length;
  j["insertions"] = r.insertions;
  j["substitutions"] = r.substitutions;
  j["deletions"] = r.deletions;
  j["matches"] = r.matches;
  j["classes"] = std::vector<std::string>(kVisemeClasses.begin(), kVisemeClasses.end());
  j["confusion"] = r.confusion;
  j["confusion_row_normalized"] = r.row_normalized();
  j["inserted"] = r.inserted;
  j["deleted"] = r.deleted;
  return j;
}

inline void write_confusion_csv(std::ostream& out, const EvalReport& r) {
  out << "ref\\hyp";
  for (auto c : kVisemeClasses) out << ',' << c;
  out << '\n';
  for (int i = 0; i < kNumVisemeClasses; ++i) {
    out << kVisemeClasses[i];
    for (int v : r.confusion[i]) out << ',' << v;
    out << '\n';
  }
}

}  // namespace mvlip
