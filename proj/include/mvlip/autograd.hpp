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

// A small reverse-mode automatic differentiation tape over dense row-major
// matrices. Every op records a closure that maps the gradient of its output
// onto the gradients of its inputs. Coarse fused ops (conv2d, LSTM sequence,
// CTC) keep the node count low enough for per-utterance graphs.

#include <algorithm>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mvlip/common.hpp"
#include "mvlip/ctc.hpp"

namespace mvlip {

/// A trainable tensor plus its accumulated gradient.
template <class S>
struct Param {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;

  Param(std::string n, Matrix<S> v) : name(std::move(n)), value(std::move(v)) { zero_grad(); }
  void zero_grad() { grad = Matrix<S>::Zero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

/// Handle to a node of a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Channel-major image layout of one matrix row: C x H x W.
struct ImageShape {
  int channels = 1, height = 0, width = 0;
  int size() const { return channels * height * width; }
  int plane() const { return height * width; }
};

template <class S>
class Graph {
 public:
  using Mat = Matrix<S>;
  using Backward = std::function<void(const Mat&)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  size_t size() const { return nodes_.size(); }

  Var constant(Mat v) { return push(std::move(v), {}, nullptr); }

  /// Borrowed value; the referenced matrix must outlive the graph.
  Var ref(const Mat& v) {
    Node n;
    n.ext = &v;
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size()) - 1};
  }

  Var param(Param<S>& p) {
    Node n;
    n.ext = &p.value;
    n.param = &p;
    n.needs_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size()) - 1};
  }

  const Mat& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.ext ? *n.ext : n.own;
  }
  S scalar(Var v) const { return value(v)(0, 0); }
  int rows(Var v) const { return int(value(v).rows()); }
  int cols(Var v) const { return int(value(v).cols()); }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  /// Gradient of the last backward() target with respect to v (zeros if unreached).
  Mat grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Mat::Zero(value(v).rows(), value(v).cols());
    return n.grad;
  }

  /// Seeds d(loss)/d(loss) = 1 and accumulates into every reachable Param.
  void backward(Var loss) {
    if (value(loss).size() != 1) fail("backward() needs a scalar");
    if (!needs_grad(loss)) return;
    acc(loss).setConstant(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.back) n.back(n.grad);
      if (n.param) n.param->grad += n.grad;
    }
  }

  // ---- elementwise and linear algebra ----

  Var matmul(Var a, Var b) {
    if (cols(a) != rows(b)) fail("matmul shape mismatch ", rows(a), "x", cols(a), " * ", rows(b), "x", cols(b));
    Mat out = value(a) * value(b);
    return push(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      if (needs_grad(a)) acc(a).noalias() += g * value(b).transpose();
      if (needs_grad(b)) acc(b).noalias() += value(a).transpose() * g;
    });
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    Mat out = value(a) + value(b);
    return push(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      if (needs_grad(a)) acc(a) += g;
      if (needs_grad(b)) acc(b) += g;
    });
  }

  /// a (n x m) + r (1 x m) broadcast over rows.
  Var add_row(Var a, Var r) {
    if (rows(r) != 1 || cols(r) != cols(a)) fail("add_row shape mismatch");
    Mat out = value(a).rowwise() + value(r).row(0);
    return push(std::move(out), {a, r}, [this, a, r](const Mat& g) {
      if (needs_grad(a)) acc(a) += g;
      if (needs_grad(r)) acc(r) += g.colwise().sum();
    });
  }

  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Mat out = value(a).cwiseProduct(value(b));
    return push(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      if (needs_grad(a)) acc(a) += g.cwiseProduct(value(b));
      if (needs_grad(b)) acc(b) += g.cwiseProduct(value(a));
    });
  }

  Var scale(Var a, S s) {
    Mat out = value(a) * s;
    return push(std::move(out), {a}, [this, a, s](const Mat& g) { acc(a) += g * s; });
  }

  /// Sum of c_i * x_i over same-shaped inputs.
  Var linear_combination(const std::vector<Var>& xs, const std::vector<S>& coeffs) {
    if (xs.empty() || xs.size() != coeffs.size()) fail("linear_combination arity mismatch");
    Mat out = value(xs[0]) * coeffs[0];
    for (size_t i = 1; i < xs.size(); ++i) {
      check_same(xs[0], xs[i], "linear_combination");
      out += value(xs[i]) * coeffs[i];
    }
    return push(std::move(out), xs, [this, xs, coeffs](const Mat& g) {
      for (size_t i = 0; i < xs.size(); ++i)
        if (needs_grad(xs[i])) acc(xs[i]) += g * coeffs[i];
    });
  }

  Var tanh(Var a) {
    Mat out = value(a).array().tanh().matrix();
    const int id = int(nodes_.size());
    return push(std::move(out), {a}, [this, a, id](const Mat& g) {
      const Mat& y = nodes_[id].own;
      acc(a).array() += g.array() * (S(1) - y.array().square());
    });
  }

  Var sigmoid(Var a) {
    Mat out = value(a).unaryExpr([](S x) { return sigm(x); });
    const int id = int(nodes_.size());
    return push(std::move(out), {a}, [this, a, id](const Mat& g) {
      const Mat& y = nodes_[id].own;
      acc(a).array() += g.array() * y.array() * (S(1) - y.array());
    });
  }

  Var relu(Var a) {
    Mat out = value(a).cwiseMax(S(0));
    return push(std::move(out), {a}, [this, a](const Mat& g) {
      acc(a).array() += (value(a).array() > S(0)).select(g.array(), S(0));
    });
  }

  Var transpose(Var a) {
    Mat out = value(a).transpose();
    return push(std::move(out), {a}, [this, a](const Mat& g) { acc(a) += g.transpose(); });
  }

  Var concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) fail("concat_cols of nothing");
    int total = 0;
    for (Var x : xs) {
      if (rows(x) != rows(xs[0])) fail("concat_cols row mismatch");
      total += cols(x);
    }
    Mat out(rows(xs[0]), total);
    int off = 0;
    for (Var x : xs) {
      out.middleCols(off, cols(x)) = value(x);
      off += cols(x);
    }
    return push(std::move(out), xs, [this, xs](const Mat& g) {
      int o = 0;
      for (Var x : xs) {
        if (needs_grad(x)) acc(x) += g.middleCols(o, cols(x));
        o += cols(x);
      }
    });
  }

  Var concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) fail("concat_rows of nothing");
    int total = 0;
    for (Var x : xs) {
      if (cols(x) != cols(xs[0])) fail("concat_rows column mismatch");
      total += rows(x);
    }
    Mat out(total, cols(xs[0]));
    int off = 0;
    for (Var x : xs) {
      out.middleRows(off, rows(x)) = value(x);
      off += rows(x);
    }
    return push(std::move(out), xs, [this, xs](const Mat& g) {
      int o = 0;
      for (Var x : xs) {
        if (needs_grad(x)) acc(x) += g.middleRows(o, rows(x));
        o += rows(x);
      }
    });
  }

  Var slice_cols(Var a, int start, int n) {
    if (start < 0 || n < 0 || start + n > cols(a)) fail("slice_cols out of range");
    Mat out = value(a).middleCols(start, n);
    return push(std::move(out), {a}, [this, a, start, n](const Mat& g) { acc(a).middleCols(start, n) += g; });
  }

  Var row(Var a, int r) {
    if (r < 0 || r >= rows(a)) fail("row index out of range");
    Mat out = value(a).row(r);
    return push(std::move(out), {a}, [this, a, r](const Mat& g) { acc(a).row(r) += g; });
  }

  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), {a}, [this, a](const Mat& g) { acc(a).array() += g(0, 0); });
  }

  Var softmax_rows(Var a) {
    Mat out = value(a);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const S m = out.row(r).maxCoeff();
      out.row(r) = (out.row(r).array() - m).exp().matrix();
      out.row(r) /= out.row(r).sum();
    }
    const int id = int(nodes_.size());
    return push(std::move(out), {a}, [this, a, id](const Mat& g) {
      const Mat& y = nodes_[id].own;
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const S dot = g.row(r).dot(y.row(r));
        acc(a).row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
      }
    });
  }

  Var log_softmax_rows(Var a) {
    Mat out = value(a);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const S m = out.row(r).maxCoeff();
      const S lse = m + std::log((out.row(r).array() - m).exp().sum());
      out.row(r).array() -= lse;
    }
    const int id = int(nodes_.size());
    return push(std::move(out), {a}, [this, a, id](const Mat& g) {
      const Mat& y = nodes_[id].own;
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const S gs = g.row(r).sum();
        acc(a).row(r).array() += g.row(r).array() - y.row(r).array().exp() * gs;
      }
    });
  }

  /// Inverted dropout; identity when p == 0.
  Var dropout(Var a, S p, std::mt19937_64& rng) {
    if (p <= S(0)) return a;
    std::bernoulli_distribution keep(1.0 - double(p));
    Mat mask(rows(a), cols(a));
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? S(1) / (S(1) - p) : S(0);
    Mat out = value(a).cwiseProduct(mask);
    return push(std::move(out), {a}, [this, a, mask](const Mat& g) { acc(a) += g.cwiseProduct(mask); });
  }

  /// Row `id` of an embedding table.
  Var gather_row(Var table, int id) { return row(table, id); }

  // ---- convolutional ops ----

  /// 3x3 "same" convolution applied independently to every row of x.
  /// x: N x (Cin*H*W), weight: Cout x (Cin*9), bias: 1 x Cout.
  Var conv2d(Var x, Var weight, Var bias, ImageShape in) {
    const int cin = in.channels, H = in.height, W = in.width, cout = rows(weight);
    if (cols(x) != in.size()) fail("conv2d input has ", cols(x), " columns, expected ", in.size());
    if (cols(weight) != cin * 9) fail("conv2d weight expects ", cols(weight) / 9, " input channels, got ", cin);
    if (rows(bias) != 1 || cols(bias) != cout) fail("conv2d bias shape mismatch");
    const int N = rows(x), P = H * W;
    Mat out(N, cout * P);
    Mat col(cin * 9, P);
    for (int n = 0; n < N; ++n) {
      im2col(value(x).row(n).data(), in, col);
      Eigen::Map<Mat> o(out.row(n).data(), cout, P);
      o.noalias() = value(weight) * col;
      o.colwise() += value(bias).row(0).transpose();
    }
    return push(std::move(out), {x, weight, bias}, [this, x, weight, bias, in](const Mat& g) {
      const int cin2 = in.channels, P2 = in.plane(), cout2 = rows(weight);
      Mat c(cin2 * 9, P2), dcol(cin2 * 9, P2);
      for (int n = 0; n < rows(x); ++n) {
        Eigen::Map<const Mat> go(g.row(n).data(), cout2, P2);
        if (needs_grad(weight)) {
          im2col(value(x).row(n).data(), in, c);
          acc(weight).noalias() += go * c.transpose();
        }
        if (needs_grad(bias)) acc(bias) += go.rowwise().sum().transpose();
        if (needs_grad(x)) {
          dcol.noalias() = value(weight).transpose() * go;
          col2im(dcol, in, acc(x).row(n).data());
        }
      }
    });
  }

  /// 2x2 max pooling with stride 2 (odd trailing rows/cols are dropped).
  Var maxpool2(Var x, ImageShape in) {
    const int C = in.channels, H = in.height, W = in.width, Ho = H / 2, Wo = W / 2, N = rows(x);
    if (Ho == 0 || Wo == 0) fail("maxpool2 on a ", H, "x", W, " image");
    Mat out(N, C * Ho * Wo);
    std::vector<int> arg(size_t(N) * C * Ho * Wo);
    for (int n = 0; n < N; ++n) {
      const S* src = value(x).row(n).data();
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx) {
            int best = (c * H + 2 * y) * W + 2 * xx;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                int idx = (c * H + 2 * y + dy) * W + 2 * xx + dx;
                if (src[idx] > src[best]) best = idx;
              }
            const size_t o = (size_t(c) * Ho + y) * Wo + xx;
            out(n, Eigen::Index(o)) = src[best];
            arg[size_t(n) * C * Ho * Wo + o] = best;
          }
    }
    auto argp = std::make_shared<std::vector<int>>(std::move(arg));
    return push(std::move(out), {x}, [this, x, argp](const Mat& g) {
      Mat& gx = acc(x);
      const Eigen::Index per = g.cols();
      for (Eigen::Index n = 0; n < g.rows(); ++n)
        for (Eigen::Index o = 0; o < per; ++o) gx(n, (*argp)[size_t(n * per + o)]) += g(n, o);
    });
  }

  /// Mean over the spatial plane: N x (C*H*W) -> N x C.
  Var global_avg_pool(Var x, ImageShape in) {
    const int C = in.channels, P = in.plane(), N = rows(x);
    Mat out(N, C);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) out(n, c) = value(x).row(n).segment(c * P, P).mean();
    return push(std::move(out), {x}, [this, x, C, P](const Mat& g) {
      Mat& gx = acc(x);
      for (Eigen::Index n = 0; n < g.rows(); ++n)
        for (int c = 0; c < C; ++c) gx.row(n).segment(c * P, P).array() += g(n, c) / S(P);
    });
  }

  /// Zero padded 1-D correlation of a 1 x T signal with C filters of odd
  /// width K (filters: C x K). Output is T x C.
  Var conv1d_same(Var a, Var filters) {
    if (rows(a) != 1) fail("conv1d_same expects a row vector");
    const int T = cols(a), C = rows(filters), K = cols(filters), half = K / 2;
    Mat out = Mat::Zero(T, C);
    const Mat& s = value(a);
    const Mat& F = value(filters);
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k) {
        const int src = t + k - half;
        if (src < 0 || src >= T) continue;
        out.row(t) += F.col(k).transpose() * s(0, src);
      }
    return push(std::move(out), {a, filters}, [this, a, filters, T, K, half](const Mat& g) {
      const Mat& s2 = value(a);
      const Mat& F2 = value(filters);
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k) {
          const int src = t + k - half;
          if (src < 0 || src >= T) continue;
          if (needs_grad(filters)) acc(filters).col(k) += g.row(t).transpose() * s2(0, src);
          if (needs_grad(a)) acc(a)(0, src) += g.row(t).dot(F2.col(k).transpose());
        }
    });
  }

  // ---- recurrent ops (gate order i, f, g, o) ----

  /// One LSTM layer over all rows of x (T x I), left to right or reversed.
  /// Wx: I x 4H, Wh: H x 4H, b: 1 x 4H. Returns T x H hidden states in the
  /// original time order. Initial state is zero.
  Var lstm_sequence(Var x, Var Wx, Var Wh, Var b, bool reverse) {
    const int T = rows(x), H = rows(Wh);
    if (cols(Wx) != 4 * H || cols(Wh) != 4 * H || cols(b) != 4 * H || rows(Wx) != cols(x))
      fail("lstm_sequence shape mismatch");
    auto st = std::make_shared<SeqState>();
    st->gates.resize(T, 4 * H);
    st->cells.resize(T, H);
    Mat out(T, H);
    Mat xs = value(x) * value(Wx);
    xs.rowwise() += value(b).row(0);
    RowVector<S> h = RowVector<S>::Zero(H), c = RowVector<S>::Zero(H);
    for (int k = 0; k < T; ++k) {
      const int t = reverse ? T - 1 - k : k;
      RowVector<S> z = xs.row(t) + h * value(Wh);
      activate_gates(z, H);
      c = z.segment(H, H).cwiseProduct(c) + z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
      h = z.segment(3 * H, H).cwiseProduct(c.array().tanh().matrix());
      st->gates.row(t) = z;
      st->cells.row(t) = c;
      out.row(t) = h;
    }
    const int id = int(nodes_.size());
    return push(std::move(out), {x, Wx, Wh, b}, [this, x, Wx, Wh, b, reverse, st, id](const Mat& g) {
      const Mat& hs = nodes_[id].own;
      const int T2 = int(hs.rows()), H2 = int(hs.cols());
      Mat dxs(T2, 4 * H2);
      RowVector<S> dh_next = RowVector<S>::Zero(H2), dc_next = RowVector<S>::Zero(H2);
      Mat dWh = Mat::Zero(H2, 4 * H2);
      for (int k = T2 - 1; k >= 0; --k) {
        const int t = reverse ? T2 - 1 - k : k;
        const int tp = reverse ? t + 1 : t - 1;  // previous step in processing order
        const bool has_prev = k > 0;
        const auto z = st->gates.row(t);
        const RowVector<S> c_prev = has_prev ? RowVector<S>(st->cells.row(tp)) : RowVector<S>::Zero(H2);
        const RowVector<S> h_prev = has_prev ? RowVector<S>(hs.row(tp)) : RowVector<S>::Zero(H2);
        RowVector<S> dz(4 * H2);
        const RowVector<S> dh = g.row(t) + dh_next;
        cell_backward(z, st->cells.row(t), c_prev, dh, dc_next, H2, dz, dc_next);
        dWh.noalias() += h_prev.transpose() * dz;
        dh_next.noalias() = dz * value(Wh).transpose();
        dxs.row(t) = dz;
      }
      if (needs_grad(Wh)) acc(Wh) += dWh;
      if (needs_grad(Wx)) acc(Wx).noalias() += value(x).transpose() * dxs;
      if (needs_grad(b)) acc(b) += dxs.colwise().sum();
      if (needs_grad(x)) acc(x).noalias() += dxs * value(Wx).transpose();
    });
  }

  /// Single LSTM step. x: 1 x I, h, c: 1 x H. Returns 1 x 2H = [h' | c'].
  Var lstm_cell(Var x, Var h, Var c, Var Wx, Var Wh, Var b) {
    const int H = rows(Wh);
    if (cols(h) != H || cols(c) != H || rows(Wx) != cols(x) || cols(Wx) != 4 * H) fail("lstm_cell shape mismatch");
    RowVector<S> z = value(x) * value(Wx) + value(h) * value(Wh) + value(b);
    activate_gates(z, H);
    RowVector<S> c2 = z.segment(H, H).cwiseProduct(value(c)) + z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
    RowVector<S> h2 = z.segment(3 * H, H).cwiseProduct(c2.array().tanh().matrix());
    Mat out(1, 2 * H);
    out << h2, c2;
    auto zs = std::make_shared<RowVector<S>>(std::move(z));
    return push(std::move(out), {x, h, c, Wx, Wh, b}, [this, x, h, c, Wx, Wh, b, zs, H](const Mat& g) {
      RowVector<S> c_new = (zs->segment(H, H).cwiseProduct(value(c)) +
                            zs->segment(0, H).cwiseProduct(zs->segment(2 * H, H)));
      RowVector<S> dz(4 * H), dc_prev(H);
      const RowVector<S> dh = g.block(0, 0, 1, H);
      const RowVector<S> dc_in = g.block(0, H, 1, H);
      cell_backward(*zs, c_new, RowVector<S>(value(c)), dh, dc_in, H, dz, dc_prev);
      if (needs_grad(c)) acc(c) += dc_prev;
      if (needs_grad(h)) acc(h).noalias() += dz * value(Wh).transpose();
      if (needs_grad(x)) acc(x).noalias() += dz * value(Wx).transpose();
      if (needs_grad(Wx)) acc(Wx).noalias() += value(x).transpose() * dz;
      if (needs_grad(Wh)) acc(Wh).noalias() += value(h).transpose() * dz;
      if (needs_grad(b)) acc(b) += dz;
    });
  }

  // ---- losses ----

  /// -log p_ctc(target | x) for T x V log posteriors. An infeasible target
  /// yields +inf with no gradient.
  Var ctc_loss(Var logp, const LabelIds& target, int blank) {
    auto res = ctc_forward_backward(value(logp), target, blank);
    Mat out(1, 1);
    out(0, 0) = res.loss;
    if (!res.feasible) return constant(std::move(out));
    auto occ = std::make_shared<Mat>(std::move(res.occupancy));
    return push(std::move(out), {logp}, [this, logp, occ](const Mat& g) { acc(logp) -= *occ * g(0, 0); });
  }

  /// Label smoothed negative log likelihood summed over rows:
  /// sum_u [ -(1-eps) logp[u][y_u] - eps/V sum_k logp[u][k] ].
  Var smoothed_nll(Var logp, const LabelIds& targets, S eps) {
    const int U = rows(logp), V = cols(logp);
    if (int(targets.size()) != U) fail("smoothed_nll: ", targets.size(), " targets for ", U, " rows");
    Mat out(1, 1);
    S total = 0;
    for (int u = 0; u < U; ++u) {
      if (targets[u] < 0 || targets[u] >= V) fail("smoothed_nll target out of range");
      total -= (S(1) - eps) * value(logp)(u, targets[u]) + eps / S(V) * value(logp).row(u).sum();
    }
    out(0, 0) = total;
    return push(std::move(out), {logp}, [this, logp, targets, eps, V](const Mat& g) {
      Mat& gl = acc(logp);
      for (int u = 0; u < int(targets.size()); ++u) {
        gl.row(u).array() -= g(0, 0) * eps / S(V);
        gl(u, targets[u]) -= g(0, 0) * (S(1) - eps);
      }
    });
  }

 private:
  struct Node {
    Mat own;
    const Mat* ext = nullptr;
    Param<S>* param = nullptr;
    Mat grad;
    bool needs_grad = false;
    Backward back;
  };

  struct SeqState {
    Mat gates;  // activated gates per time step
    Mat cells;
  };

  static S sigm(S x) { return S(1) / (S(1) + std::exp(-x)); }

  static void activate_gates(RowVector<S>& z, int H) {
    for (int j = 0; j < 2 * H; ++j) z[j] = sigm(z[j]);
    for (int j = 2 * H; j < 3 * H; ++j) z[j] = std::tanh(z[j]);
    for (int j = 3 * H; j < 4 * H; ++j) z[j] = sigm(z[j]);
  }

  /// Backward through one LSTM step given activated gates z, new cell c,
  /// previous cell c_prev and incoming dh / dc. Writes pre-activation
  /// gradients dz and the gradient for c_prev.
  template <class Z, class C1, class C0, class DH, class DC>
  static void cell_backward(const Z& z, const C1& c, const C0& c_prev, const DH& dh, const DC& dc_in, int H,
                            RowVector<S>& dz, RowVector<S>& dc_prev) {
    for (int j = 0; j < H; ++j) {
      const S i = z[j], f = z[H + j], gg = z[2 * H + j], o = z[3 * H + j];
      const S tc = std::tanh(c[j]);
      const S dc = dh[j] * o * (S(1) - tc * tc) + dc_in[j];
      dz[j] = dc * gg * i * (S(1) - i);
      dz[H + j] = dc * c_prev[j] * f * (S(1) - f);
      dz[2 * H + j] = dc * i * (S(1) - gg * gg);
      dz[3 * H + j] = dh[j] * tc * o * (S(1) - o);
      dc_prev[j] = dc * f;
    }
  }

  static void im2col(const S* src, ImageShape in, Mat& col) {
    const int H = in.height, W = in.width;
    for (int c = 0; c < in.channels; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          S* dst = col.row((c * 3 + ky) * 3 + kx).data();
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - 1;
            for (int x = 0; x < W; ++x) {
              const int sx = x + kx - 1;
              dst[y * W + x] = (sy < 0 || sy >= H || sx < 0 || sx >= W) ? S(0) : src[(c * H + sy) * W + sx];
            }
          }
        }
  }

  static void col2im(const Mat& col, ImageShape in, S* dst) {
    const int H = in.height, W = in.width;
    for (int c = 0; c < in.channels; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const S* src = col.row((c * 3 + ky) * 3 + kx).data();
          for (int y = 0; y < H; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= H) continue;
            for (int x = 0; x < W; ++x) {
              const int sx = x + kx - 1;
              if (sx < 0 || sx >= W) continue;
              dst[(c * H + sy) * W + sx] += src[y * W + x];
            }
          }
        }
  }

  void check_same(Var a, Var b, const char* op) const {
    if (rows(a) != rows(b) || cols(a) != cols(b))
      fail(op, " shape mismatch ", rows(a), "x", cols(a), " vs ", rows(b), "x", cols(b));
  }

  Mat& acc(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      const Mat& val = n.ext ? *n.ext : n.own;
      n.grad = Mat::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  Var push(Mat value, const std::vector<Var>& inputs, Backward back) {
    Node n;
    n.own = std::move(value);
    bool need = false;
    if (grad_enabled_)
      for (Var in : inputs) need = need || nodes_.at(in.id).needs_grad;
    n.needs_grad = need;
    if (need) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{int(nodes_.size()) - 1};
  }

  bool grad_enabled_;
  std::deque<Node> nodes_;
};

}  // namespace mvlip
