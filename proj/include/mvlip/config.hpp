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

#include <nlohmann/json.hpp>

#include "mvlip/common.hpp"

namespace mvlip {

/// Temporal attention scoring function.
enum class ScorerKind { additive, multiplicative, location_aware };

inline std::string to_string(ScorerKind k) {
  switch (k) {
    case ScorerKind::additive: return "additive";
    case ScorerKind::multiplicative: return "multiplicative";
    case ScorerKind::location_aware: return "location_aware";
  }
  return "?";
}

inline ScorerKind scorer_from_string(const std::string& s) {
  if (s == "additive") return ScorerKind::additive;
  if (s == "multiplicative") return ScorerKind::multiplicative;
  if (s == "location_aware" || s == "location") return ScorerKind::location_aware;
  fail("unknown scorer kind ", s);
}

/// Architecture of the full recognizer: per-view encoders, view-temporal
/// attention decoder and CTC head.
struct ModelConfig {
  int height = 64, width = 64, channels = 1;
  std::vector<int> conv_channels{16, 32, 64, 96};
  int cell_size = 256;  // encoder LSTM (per direction) and decoder LSTM
  int att_dim = 256;
  int fusion_dim = 128;
  int embed_dim = 32;
  std::vector<int> views{0, 30, 45, 60, 90};
  ScorerKind scorer = ScorerKind::location_aware;
  int loc_kernel = 11, loc_channels = 8;
  int vocab_size = 14;
  double dropout = 0.1;

  int encoder_dim() const { return 2 * cell_size; }
  int conv_dim() const { return conv_channels.back(); }
  int blank_id() const { return 0; }
  int eos_id() const { return vocab_size - 1; }

  void validate() const {
    if (height < 1 || width < 1 || channels < 1) fail("bad frame shape");
    if (conv_channels.empty()) fail("need at least one conv layer");
    int h = height, w = width;
    for (size_t i = 0; i + 1 < conv_channels.size(); ++i) {
      h /= 2;
      w /= 2;
    }
    if (h < 1 || w < 1) fail("frame ", height, "x", width, " too small for ", conv_channels.size(), " conv layers");
    if (cell_size < 1 || att_dim < 1 || fusion_dim < 1 || embed_dim < 1) fail("layer sizes must be positive");
    if (views.empty()) fail("model needs at least one view");
    for (size_t i = 0; i < views.size(); ++i) {
      if (!is_supported_view(views[i])) fail("unsupported view ", views[i]);
      if (i > 0 && views[i] <= views[i - 1]) fail("views must be sorted and unique");
    }
    if (loc_kernel < 1 || loc_kernel % 2 == 0) fail("location kernel width must be odd");
    if (vocab_size < 3) fail("vocabulary needs blank, eos and at least one label");
    if (dropout < 0 || dropout >= 1) fail("dropout must be in [0,1)");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"height", c.height},       {"width", c.width},           {"channels", c.channels},
                     {"conv_channels", c.conv_channels}, {"cell_size", c.cell_size}, {"att_dim", c.att_dim},
                     {"fusion_dim", c.fusion_dim}, {"embed_dim", c.embed_dim},  {"views", c.views},
                     {"scorer", to_string(c.scorer)}, {"loc_kernel", c.loc_kernel}, {"loc_channels", c.loc_channels},
                     {"vocab_size", c.vocab_size}, {"dropout", c.dropout}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.height = j.value("height", d.height);
  c.width = j.value("width", d.width);
  c.channels = j.value("channels", d.channels);
  c.conv_channels = j.value("conv_channels", d.conv_channels);
  c.cell_size = j.value("cell_size", d.cell_size);
  c.att_dim = j.value("att_dim", d.att_dim);
  c.fusion_dim = j.value("fusion_dim", d.fusion_dim);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.views = j.value("views", d.views);
  c.scorer = scorer_from_string(j.value("scorer", to_string(d.scorer)));
  c.loc_kernel = j.value("loc_kernel", d.loc_kernel);
  c.loc_channels = j.value("loc_channels", d.loc_channels);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.dropout = j.value("dropout", d.dropout);
}

}  // namespace mvlip
