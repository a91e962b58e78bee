// Copyright 2026 The npmt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "npmt/numcore.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace npmt {

namespace {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;
template <typename Real>
using VecMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
template <typename Real>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

template <typename Real>
ConstMatMap<Real> as_mat(const Array<Real>& a) {
  return ConstMatMap<Real>(a.data(), static_cast<Eigen::Index>(a.rows()),
                           static_cast<Eigen::Index>(a.cols()));
}

template <typename Real>
MatMap<Real> as_mat(Array<Real>& a) {
  return MatMap<Real>(a.data(), static_cast<Eigen::Index>(a.rows()),
                      static_cast<Eigen::Index>(a.cols()));
}

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

[[noreturn]] void dim_error(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::kDimension,
              op + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Array

template <typename Real>
Array<Real>::Array(Shape shape, Real fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

template <typename Real>
Array<Real>::Array(Shape shape, std::vector<Real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size())
    throw Error(ErrorCode::kDimension, "array: shape " + shape_string(shape_) +
                                           " does not hold " +
                                           std::to_string(data_.size()) + " values");
}

template <typename Real>
Array<Real> Array<Real>::row(std::initializer_list<Real> values) {
  return Array({values.size()}, std::vector<Real>(values));
}

template <typename Real>
Array<Real> Array<Real>::matrix(std::size_t rows, std::size_t cols,
                                std::initializer_list<Real> values) {
  return Array({rows, cols}, std::vector<Real>(values));
}

template <typename Real>
std::size_t Array<Real>::rows() const {
  if (shape_.empty()) return 1;
  return shape_.size() == 1 ? 1 : shape_[0];
}

template <typename Real>
std::size_t Array<Real>::cols() const {
  if (shape_.empty()) return 1;
  if (shape_.size() == 1) return shape_[0];
  std::size_t c = 1;
  for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
  return c;
}

template <typename Real>
void Array<Real>::fill(Real v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename Real>
void Array<Real>::reshape(Shape shape) {
  if (product(shape) != data_.size()) dim_error("reshape", shape_, shape);
  shape_ = std::move(shape);
}

// ---------------------------------------------------------------- scalars

template <typename Real>
Real logsumexp(std::span<const Real> xs) {
  Real mx = neg_inf<Real>();
  for (Real x : xs) mx = std::max(mx, x);
  if (mx == neg_inf<Real>()) return neg_inf<Real>();
  if (std::isinf(mx)) return mx;  // +inf
  Real acc = 0;
  for (Real x : xs)
    if (x != neg_inf<Real>()) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

template <typename Real>
Real logsumexp2(Real a, Real b) {
  if (a == neg_inf<Real>()) return b;
  if (b == neg_inf<Real>()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

template <typename Real>
Real stable_sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

namespace kernels {

template <typename Real>
void affine_rows(const Array<Real>& w, const Array<Real>& x, const Array<Real>* b,
                 Array<Real>& out) {
  const auto m = w.rows(), n = w.cols();
  if (x.cols() != n) dim_error("affine", w.shape(), x.shape());
  if (b && b->size() != m) dim_error("affine bias", w.shape(), b->shape());
  const auto rows = x.rows();
  if (out.size() != rows * m) out = Array<Real>(Shape{rows, m});
  auto W = as_mat(w);
  for (std::size_t r = 0; r < rows; ++r) {
    ConstVecMap<Real> xr(x.data() + r * n, static_cast<Eigen::Index>(n));
    VecMap<Real> yr(out.data() + r * m, static_cast<Eigen::Index>(m));
    yr.noalias() = W * xr;
    if (b) yr += ConstVecMap<Real>(b->data(), static_cast<Eigen::Index>(m));
  }
}

template <typename Real>
void log_softmax_rows(const Array<Real>& x, Array<Real>& out) {
  if (&out != &x) out = x;
  const auto rows = x.rows(), cols = x.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row_span(r);
    const Real lse = logsumexp<Real>(std::span<const Real>(row.data(), cols));
    for (auto& v : row) v -= lse;
  }
}

}  // namespace kernels

// ---------------------------------------------------------------- Tape

template <typename Real>
typename Tape<Real>::Var Tape<Real>::push(Array<Real> value, bool needs_grad) {
  Node n;
  n.own = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::constant(Array<Real> value) {
  return push(std::move(value), false);
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::param(const Array<Real>& value, Array<Real>* grad_sink) {
  Node n;
  n.ext = &value;
  n.sink = grad_sink;
  n.needs_grad = grad_sink != nullptr;
  if (grad_sink && !grad_sink->same_shape(value))
    dim_error("param grad sink", value.shape(), grad_sink->shape());
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename Real>
const Array<Real>& Tape<Real>::value(Var v) const {
  return nodes_.at(v.id).value();
}

template <typename Real>
const Array<Real>& Tape<Real>::grad(Var v) const {
  return nodes_.at(v.id).grad;
}

template <typename Real>
Array<Real>& Tape<Real>::grad_of(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() != n.value().size() || n.grad.shape() != n.value().shape())
    n.grad = Array<Real>(n.value().shape());
  return n.grad;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::affine(Var w, Var x, Var b) {
  const auto& W = value(w);
  const auto& X = value(x);
  const auto m = W.rows(), n = W.cols();
  if (W.rank() != 2 || X.cols() != n) dim_error("affine", W.shape(), X.shape());
  if (b.valid() && value(b).size() != m) dim_error("affine bias", W.shape(), value(b).shape());
  const auto rows = X.rows();
  Array<Real> y(X.rank() == 1 ? Shape{m} : Shape{rows, m});
  auto Y = as_mat(y);
  Y.noalias() = as_mat(X) * as_mat(W).transpose();
  if (b.valid()) {
    ConstVecMap<Real> bv(value(b).data(), static_cast<Eigen::Index>(m));
    Y.rowwise() += bv.transpose();
  }
  const bool ng = needs(w) || needs(x) || (b.valid() && needs(b));
  Var out = push(std::move(y), ng);
  if (!ng) return out;
  ops_.push_back([this, w, x, b, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    auto g = as_mat(G);
    if (needs(x)) as_mat(grad_of(x)).noalias() += g * as_mat(value(w));
    if (needs(w)) as_mat(grad_of(w)).noalias() += g.transpose() * as_mat(value(x));
    if (b.valid() && needs(b)) {
      auto& gb = grad_of(b);
      VecMap<Real>(gb.data(), static_cast<Eigen::Index>(gb.size())) +=
          g.colwise().sum().transpose();
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::activation(Activation kind, Var x) {
  Array<Real> y = value(x);
  if (kind == Activation::kSigmoid) {
    for (auto& v : y.values()) v = stable_sigmoid(v);
  } else {
    for (auto& v : y.values()) v = std::tanh(v);
  }
  Var out = push(std::move(y), needs(x));
  if (!needs(x)) return out;
  ops_.push_back([this, kind, x, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    const auto& Y = nodes_[out.id].value();
    auto& gx = grad_of(x);
    for (std::size_t i = 0; i < Y.size(); ++i) {
      const Real d = kind == Activation::kSigmoid ? Y[i] * (Real(1) - Y[i])
                                                  : Real(1) - Y[i] * Y[i];
      gx[i] += G[i] * d;
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::log_softmax(Var x) {
  Array<Real> y;
  kernels::log_softmax_rows(value(x), y);
  Var out = push(std::move(y), needs(x));
  if (!needs(x)) return out;
  ops_.push_back([this, x, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    const auto& Y = nodes_[out.id].value();
    auto& gx = grad_of(x);
    const auto rows = Y.rows(), cols = Y.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      Real gs = 0;
      for (std::size_t c = 0; c < cols; ++c) gs += G(r, c);
      for (std::size_t c = 0; c < cols; ++c) gx(r, c) += G(r, c) - std::exp(Y(r, c)) * gs;
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::add(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.size() != B.size()) dim_error("add", A.shape(), B.shape());
  Array<Real> y = A;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
  const bool ng = needs(a) || needs(b);
  Var out = push(std::move(y), ng);
  if (!ng) return out;
  ops_.push_back([this, a, b, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    for (Var v : {a, b}) {
      if (!needs(v)) continue;
      auto& gv = grad_of(v);
      for (std::size_t i = 0; i < G.size(); ++i) gv[i] += G[i];
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::mul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.size() != B.size()) dim_error("mul", A.shape(), B.shape());
  Array<Real> y = A;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= B[i];
  const bool ng = needs(a) || needs(b);
  Var out = push(std::move(y), ng);
  if (!ng) return out;
  ops_.push_back([this, a, b, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    if (needs(a)) {
      auto& ga = grad_of(a);
      const auto& B = value(b);
      for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i] * B[i];
    }
    if (needs(b)) {
      auto& gb = grad_of(b);
      const auto& A = value(a);
      for (std::size_t i = 0; i < G.size(); ++i) gb[i] += G[i] * A[i];
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::scale(Var a, Real c) {
  Array<Real> y = value(a);
  for (auto& v : y.values()) v *= c;
  Var out = push(std::move(y), needs(a));
  if (!needs(a)) return out;
  ops_.push_back([this, a, c, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    auto& ga = grad_of(a);
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += c * G[i];
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::mul_const(Var a, const Array<Real>& mask) {
  return mul(a, constant(mask));
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::sum(Var a) {
  Real s = 0;
  for (Real v : value(a).values()) s += v;
  Var out = push(Array<Real>(Shape{1}, s), needs(a));
  if (!needs(a)) return out;
  ops_.push_back([this, a, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    auto& ga = grad_of(a);
    for (auto& v : ga.values()) v += G[0];
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::gather_rows(Var a, std::vector<long> index) {
  const auto& A = value(a);
  const auto rows = A.rows(), cols = A.cols();
  Array<Real> y(Shape{index.size(), cols});
  for (std::size_t r = 0; r < index.size(); ++r) {
    const long src = index[r];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= rows)
      throw Error(ErrorCode::kDimension, "gather_rows: row " + std::to_string(src) +
                                             " out of range for " + shape_string(A.shape()));
    std::copy_n(A.data() + src * cols, cols, y.data() + r * cols);
  }
  Var out = push(std::move(y), needs(a));
  if (!needs(a)) return out;
  ops_.push_back([this, a, out, index = std::move(index), cols] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    auto& ga = grad_of(a);
    for (std::size_t r = 0; r < index.size(); ++r) {
      if (index[r] < 0) continue;
      Real* dst = ga.data() + index[r] * cols;
      const Real* src = G.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::reshape(Var a, Shape shape) {
  Array<Real> y = value(a);
  y.reshape(std::move(shape));
  Var out = push(std::move(y), needs(a));
  if (!needs(a)) return out;
  ops_.push_back([this, a, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    auto& ga = grad_of(a);
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::concat_cols(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.rows() != B.rows()) dim_error("concat_cols", A.shape(), B.shape());
  const auto rows = A.rows(), ca = A.cols(), cb = B.cols();
  Array<Real> y(Shape{rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(A.data() + r * ca, ca, y.data() + r * (ca + cb));
    std::copy_n(B.data() + r * cb, cb, y.data() + r * (ca + cb) + ca);
  }
  const bool ng = needs(a) || needs(b);
  Var out = push(std::move(y), ng);
  if (!ng) return out;
  ops_.push_back([this, a, b, out, rows, ca, cb] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    if (needs(a)) {
      auto& ga = grad_of(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += G[r * (ca + cb) + c];
    }
    if (needs(b)) {
      auto& gb = grad_of(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += G[r * (ca + cb) + ca + c];
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::stack_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::kEmptyInput, "stack_rows: no parts");
  const auto cols = value(parts[0]).cols();
  std::size_t rows = 0;
  bool ng = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) dim_error("stack_rows", value(parts[0]).shape(), value(p).shape());
    rows += value(p).rows();
    ng = ng || needs(p);
  }
  Array<Real> y(Shape{rows, cols});
  std::size_t at = 0;
  for (Var p : parts) {
    const auto& P = value(p);
    std::copy_n(P.data(), P.size(), y.data() + at);
    at += P.size();
  }
  Var out = push(std::move(y), ng);
  if (!ng) return out;
  ops_.push_back([this, parts, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    std::size_t at = 0;
    for (Var p : parts) {
      const auto n = value(p).size();
      if (needs(p)) {
        auto& gp = grad_of(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += G[at + i];
      }
      at += n;
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::gated_window_sum(Var g, Var u) {
  const auto& Gt = value(g);
  const auto& U = value(u);
  const auto T = Gt.rows(), w = Gt.cols();
  if (U.rows() != T || U.cols() % w != 0) dim_error("gated_window_sum", Gt.shape(), U.shape());
  const auto d = U.cols() / w;
  Array<Real> y(Shape{T, d});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < w; ++i) {
      const Real gi = Gt(t, i);
      const Real* ui = U.data() + t * w * d + i * d;
      Real* yt = y.data() + t * d;
      for (std::size_t c = 0; c < d; ++c) yt[c] += gi * ui[c];
    }
  const bool ng = needs(g) || needs(u);
  Var out = push(std::move(y), ng);
  if (!ng) return out;
  ops_.push_back([this, g, u, out, T, w, d] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    const auto& Gv = value(g);
    const auto& U = value(u);
    for (std::size_t t = 0; t < T; ++t) {
      const Real* gt = G.data() + t * d;
      for (std::size_t i = 0; i < w; ++i) {
        const Real* ui = U.data() + t * w * d + i * d;
        if (needs(g)) {
          Real acc = 0;
          for (std::size_t c = 0; c < d; ++c) acc += gt[c] * ui[c];
          grad_of(g)(t, i) += acc;
        }
        if (needs(u)) {
          Real* gu = grad_of(u).data() + t * w * d + i * d;
          const Real gi = Gv(t, i);
          for (std::size_t c = 0; c < d; ++c) gu[c] += gi * gt[c];
        }
      }
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::gru_cell(Var x, Var h, Var w, Var u, Var b) {
  const auto& X = value(x);
  const auto& H = value(h);
  const auto& W = value(w);
  const auto& U = value(u);
  const auto& B = value(b);
  const auto hid = H.cols();
  const auto rows = X.rows();
  if (W.rows() != 3 * hid || W.cols() != X.cols()) dim_error("gru_cell W", W.shape(), X.shape());
  if (U.rows() != 3 * hid || U.cols() != hid) dim_error("gru_cell U", U.shape(), H.shape());
  if (B.size() != 3 * hid) dim_error("gru_cell b", B.shape(), W.shape());
  if (H.rows() != rows) dim_error("gru_cell h", X.shape(), H.shape());

  RowMat<Real> A = as_mat(X) * as_mat(W).transpose();
  RowMat<Real> C = as_mat(H) * as_mat(U).transpose();
  // Saved: z, r, n, C_n.
  Array<Real> z(Shape{rows, hid}), r(Shape{rows, hid}), n(Shape{rows, hid}), cn(Shape{rows, hid});
  Array<Real> y(H.rank() == 1 ? Shape{hid} : Shape{rows, hid});
  for (std::size_t k = 0; k < rows; ++k)
    for (std::size_t j = 0; j < hid; ++j) {
      const Real zz = stable_sigmoid(A(k, j) + C(k, j) + B[j]);
      const Real rr = stable_sigmoid(A(k, hid + j) + C(k, hid + j) + B[hid + j]);
      const Real cc = C(k, 2 * hid + j);
      const Real nn = std::tanh(A(k, 2 * hid + j) + rr * cc + B[2 * hid + j]);
      z(k, j) = zz;
      r(k, j) = rr;
      n(k, j) = nn;
      cn(k, j) = cc;
      y[k * hid + j] = (Real(1) - zz) * nn + zz * H[k * hid + j];
    }
  const bool ng = needs(x) || needs(h) || needs(w) || needs(u) || needs(b);
  Var out = push(std::move(y), ng);
  if (!ng) return out;
  ops_.push_back([this, x, h, w, u, b, out, rows, hid, z = std::move(z), r = std::move(r),
                  n = std::move(n), cn = std::move(cn)] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    const auto& H = value(h);
    RowMat<Real> dA(rows, 3 * hid), dC(rows, 3 * hid);
    Array<Real> dh_direct(Shape{rows, hid});
    for (std::size_t k = 0; k < rows; ++k)
      for (std::size_t j = 0; j < hid; ++j) {
        const Real g = G[k * hid + j];
        const Real zz = z(k, j), rr = r(k, j), nn = n(k, j);
        const Real dz = g * (H[k * hid + j] - nn);
        const Real dn = g * (Real(1) - zz);
        dh_direct(k, j) = g * zz;
        const Real dan = dn * (Real(1) - nn * nn);
        const Real dr = dan * cn(k, j);
        const Real dar = dr * rr * (Real(1) - rr);
        const Real daz = dz * zz * (Real(1) - zz);
        dA(k, j) = daz;
        dA(k, hid + j) = dar;
        dA(k, 2 * hid + j) = dan;
        dC(k, j) = daz;
        dC(k, hid + j) = dar;
        dC(k, 2 * hid + j) = dan * rr;
      }
    if (needs(x)) as_mat(grad_of(x)).noalias() += dA * as_mat(value(w));
    if (needs(w)) as_mat(grad_of(w)).noalias() += dA.transpose() * as_mat(value(x));
    if (needs(u)) as_mat(grad_of(u)).noalias() += dC.transpose() * as_mat(H);
    if (needs(b)) {
      auto& gb = grad_of(b);
      VecMap<Real>(gb.data(), static_cast<Eigen::Index>(gb.size())) +=
          dA.colwise().sum().transpose();
    }
    if (needs(h)) {
      auto& gh = grad_of(h);
      auto ghm = as_mat(gh);
      ghm.noalias() += dC * as_mat(value(u));
      for (std::size_t i = 0; i < dh_direct.size(); ++i) gh[i] += dh_direct[i];
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::gather_sum(const std::vector<Var>& inputs,
                                                const std::vector<std::vector<Term>>& terms) {
  Array<Real> y(Shape{terms.size()});
  bool ng = false;
  for (Var v : inputs) ng = ng || needs(v);
  for (std::size_t e = 0; e < terms.size(); ++e) {
    Real acc = 0;
    for (const Term& t : terms[e]) acc += value(inputs[t.input])[t.offset];
    y[e] = acc;
  }
  Var out = push(std::move(y), ng);
  if (!ng) return out;
  ops_.push_back([this, inputs, terms, out] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    for (std::size_t e = 0; e < terms.size(); ++e) {
      if (G[e] == Real(0)) continue;
      for (const Term& t : terms[e]) {
        Var v = inputs[t.input];
        if (needs(v)) grad_of(v)[t.offset] += G[e];
      }
    }
  });
  return out;
}

template <typename Real>
typename Tape<Real>::Var Tape<Real>::custom(const std::vector<Var>& inputs, Array<Real> output,
                                            CustomBackward backward) {
  bool ng = false;
  for (Var v : inputs) ng = ng || needs(v);
  Var out = push(std::move(output), ng);
  if (!ng) return out;
  ops_.push_back([this, inputs, out, backward = std::move(backward)] {
    const auto& G = nodes_[out.id].grad;
    if (G.empty()) return;
    auto grads = backward(G);
    if (grads.size() != inputs.size())
      throw Error(ErrorCode::kDimension, "custom op: wrong number of input gradients");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!needs(inputs[i])) continue;
      auto& gi = grad_of(inputs[i]);
      if (grads[i].size() != gi.size()) dim_error("custom op grad", gi.shape(), grads[i].shape());
      for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += grads[i][k];
    }
  });
  return out;
}

template <typename Real>
void Tape<Real>::backward(Var out, Real seed) {
  if (value(out).size() != 1)
    throw Error(ErrorCode::kDimension,
                "backward: output must be scalar, got " + shape_string(value(out).shape()));
  if (!needs(out)) return;
  grad_of(out)[0] += seed;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  for (auto& n : nodes_) {
    if (!n.sink || n.grad.empty()) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) (*n.sink)[i] += n.grad[i];
  }
}

// ---------------------------------------------------------------- grad_check

double grad_check(const GradFn& f, const Array<double>& theta, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-4))
    throw Error(ErrorCode::kInvalidArgument, "grad_check: step must lie in [1e-6, 1e-4]");
  Array<double> analytic(theta.shape());
  const double f0 = f(theta, &analytic);
  if (!std::isfinite(f0)) throw Error(ErrorCode::kNumeric, "grad_check: f(theta) is not finite");
  Array<double> probe = theta;
  double worst = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + eps;
    const double fp = f(probe, nullptr);
    probe[i] = theta[i] - eps;
    const double fm = f(probe, nullptr);
    probe[i] = theta[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error(ErrorCode::kNumeric,
                  "grad_check: non-finite evaluation at coordinate " + std::to_string(i));
    const double numeric = (fp - fm) / (2 * eps);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

template class Array<float>;
template class Array<double>;
template class Tape<float>;
template class Tape<double>;
template float logsumexp<float>(std::span<const float>);
template double logsumexp<double>(std::span<const double>);
template float logsumexp2<float>(float, float);
template double logsumexp2<double>(double, double);
template float stable_sigmoid<float>(float);
template double stable_sigmoid<double>(double);
template void kernels::affine_rows<float>(const Array<float>&, const Array<float>&,
                                          const Array<float>*, Array<float>&);
template void kernels::affine_rows<double>(const Array<double>&, const Array<double>&,
                                           const Array<double>*, Array<double>&);
template void kernels::log_softmax_rows<float>(const Array<float>&, Array<float>&);
template void kernels::log_softmax_rows<double>(const Array<double>&, Array<double>&);

}  // namespace npmt
