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

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace mvlip {

/// Every recoverable failure in the library is reported as an Error carrying
/// a human readable message (file/line/position where that applies).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class... Args>
[[noreturn]] inline void fail(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  throw Error(os.str());
}

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
constexpr S kNegInf = -std::numeric_limits<S>::infinity();

/// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
template <class S>
inline S log_add(S a, S b) {
  if (a == kNegInf<S>) return b;
  if (b == kNegInf<S>) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

/// Camera angles (degrees) that a clip may carry.
inline constexpr int kSupportedViews[] = {0, 30, 45, 60, 90};

inline bool is_supported_view(int angle) {
  for (int v : kSupportedViews)
    if (v == angle) return true;
  return false;
}

}  // namespace mvlip
