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

#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlip/autograd.hpp"
#include "mvlip/common.hpp"

namespace mvlip {

/// Named parameters in registration order (which is also checkpoint order).
template <class S>
class ParamSet {
 public:
  Param<S>& add(const std::string& name, Matrix<S> value) {
    if (index_.count(name)) fail("parameter ", name, " registered twice");
    index_[name] = params_.size();
    params_.push_back(std::make_unique<Param<S>>(name, std::move(value)));
    return *params_.back();
  }

  Param<S>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) fail("no parameter named ", name);
    return *params_[it->second];
  }
  const Param<S>& get(const std::string& name) const { return const_cast<ParamSet*>(this)->get(name); }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  size_t size() const { return params_.size(); }
  Param<S>& operator[](size_t i) { return *params_[i]; }
  const Param<S>& operator[](size_t i) const { return *params_[i]; }

  size_t total_elements() const {
    size_t n = 0;
    for (const auto& p : params_) n += size_t(p->size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  /// Snapshot / restore of values (used to keep the best epoch).
  std::vector<Matrix<S>> values() const {
    std::vector<Matrix<S>> out;
    for (const auto& p : params_) out.push_back(p->value);
    return out;
  }
  void set_values(const std::vector<Matrix<S>>& v) {
    if (v.size() != params_.size()) fail("parameter snapshot size mismatch");
    for (size_t i = 0; i < v.size(); ++i) params_[i]->value = v[i];
  }

 private:
  std::vector<std::unique_ptr<Param<S>>> params_;
  std::map<std::string, size_t> index_;
};

namespace init {

/// He normal: N(0, 2 / fan_in).
template <class S>
Matrix<S> he_normal(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, std::sqrt(2.0 / fan_in));
  Matrix<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = S(d(rng));
  return m;
}

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <class S>
Matrix<S> uniform_fan_in(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  const double r = 1.0 / std::sqrt(double(fan_in));
  std::uniform_real_distribution<double> d(-r, r);
  Matrix<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = S(d(rng));
  return m;
}

template <class S>
Matrix<S> zeros(int rows, int cols) {
  return Matrix<S>::Zero(rows, cols);
}

}  // namespace init

// Checkpoint container:
//   8 bytes  magic "MVLCKPT1"
//   u64      header length (little endian)
//   header   JSON {"config": {...}, "tensors": [{"name","rows","cols","offset"}]}
//   body     little-endian float32 values, row-major, concatenated in header order
inline constexpr char kCheckpointMagic[8] = {'M', 'V', 'L', 'C', 'K', 'P', 'T', '1'};

template <class S>
void write_checkpoint(const std::string& path, const nlohmann::json& config, const ParamSet<S>& params) {
  nlohmann::ordered_json header;
  header["config"] = config;
  header["tensors"] = nlohmann::ordered_json::array();
  uint64_t offset = 0;
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    header["tensors"].push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"offset", offset}});
    offset += uint64_t(p.value.size()) * 4;
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write checkpoint ", path);
  out.write(kCheckpointMagic, 8);
  uint64_t len = text.size();
  for (int b = 0; b < 8; ++b) out.put(char((len >> (8 * b)) & 0xff));
  out.write(text.data(), std::streamsize(text.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& v = params[i].value;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      float f = float(v.data()[k]);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) out.put(char((bits >> (8 * b)) & 0xff));
    }
  }
  if (!out) fail("error writing checkpoint ", path);
}

struct CheckpointData {
  nlohmann::json config;
  std::vector<std::pair<std::string, Matrix<float>>> tensors;
};

inline CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint ", path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) fail(path, ": not a checkpoint");
  unsigned char lb[8];
  if (!in.read(reinterpret_cast<char*>(lb), 8)) fail(path, ": truncated");
  uint64_t len = 0;
  for (int b = 0; b < 8; ++b) len |= uint64_t(lb[b]) << (8 * b);
  std::string text(len, '\0');
  if (!in.read(text.data(), std::streamsize(len))) fail(path, ": truncated header");
  CheckpointData d;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(path, ": bad header: ", e.what());
  }
  d.config = header.at("config");
  for (const auto& t : header.at("tensors")) {
    const int r = t.at("rows"), c = t.at("cols");
    Matrix<float> m(r, c);
    std::vector<unsigned char> buf(size_t(r) * c * 4);
    if (!in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size())))
      fail(path, ": truncated tensor ", t.at("name").get<std::string>());
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      uint32_t bits = uint32_t(buf[4 * k]) | uint32_t(buf[4 * k + 1]) << 8 | uint32_t(buf[4 * k + 2]) << 16 |
                      uint32_t(buf[4 * k + 3]) << 24;
      std::memcpy(&m.data()[k], &bits, 4);
    }
    d.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  return d;
}

}  // namespace mvlip
