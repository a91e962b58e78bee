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

// Dense arrays and a reverse-mode tape.
//
// Arrays are row-major and at most rank 2 for everything the model touches;
// a rank-1 array of length n behaves as a 1 x n row wherever an op needs a
// matrix.  Every op records a backward closure on the tape; `backward`
// replays them in exact reverse order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace npmt {

enum class ErrorCode : int {
  kOk = 0,
  kDimension = 1,
  kOutOfVocab = 2,
  kEmptyInput = 3,
  kParse = 4,
  kConfig = 5,
  kNumeric = 6,
  kIo = 7,
  kSize = 8,
  kUndefined = 9,
  kInvalidArgument = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

template <typename Real>
constexpr Real neg_inf() {
  return -std::numeric_limits<Real>::infinity();
}

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

template <typename Real>
class Array {
 public:
  using value_type = Real;

  Array() = default;
  explicit Array(Shape shape, Real fill = Real(0));
  Array(Shape shape, std::vector<Real> data);

  static Array row(std::initializer_list<Real> values);
  static Array matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<Real> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Matrix view: rank-1 is a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  std::span<Real> row_span(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const Real> row_span(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(Real v);
  void reshape(Shape shape);
  bool same_shape(const Array& other) const { return shape_ == other.shape_; }

  template <typename Other>
  Array<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Array<Other>(shape_, std::move(out));
  }

  bool operator==(const Array& other) const = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

// log(sum(exp(xs))) with max shift; empty input gives -inf.
template <typename Real>
Real logsumexp(std::span<const Real> xs);

template <typename Real>
Real logsumexp2(Real a, Real b);

template <typename Real>
Real stable_sigmoid(Real x);

enum class Activation { kSigmoid, kTanh };

// Forward-only kernels shared by the tape ops and the inference paths.
namespace kernels {

// out[r] = W * x[r] + b, one GEMV per row so a row's result does not depend
// on how many rows are in the batch.
template <typename Real>
void affine_rows(const Array<Real>& w, const Array<Real>& x, const Array<Real>* b,
                 Array<Real>& out);

template <typename Real>
void log_softmax_rows(const Array<Real>& x, Array<Real>& out);

}  // namespace kernels

template <typename Real>
class Tape {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.  `param` reads `value` in place (it must outlive the tape) and
  // adds its gradient into `*grad_sink` during backward when non-null.
  Var constant(Array<Real> value);
  Var param(const Array<Real>& value, Array<Real>* grad_sink);

  const Array<Real>& value(Var v) const;
  const Array<Real>& grad(Var v) const;

  // y = x W^T + b, x is [n] or [B x n], W is [m x n], b (optional) is [m].
  Var affine(Var w, Var x, Var b = Var{});
  Var activation(Activation kind, Var x);
  Var sigmoid(Var x) { return activation(Activation::kSigmoid, x); }
  Var tanh(Var x) { return activation(Activation::kTanh, x); }
  // Row-wise log-softmax.
  Var log_softmax(Var x);
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, Real c);
  Var mul_const(Var a, const Array<Real>& mask);
  Var sum(Var a);
  // Rows of `a` selected by index; index -1 yields a zero row.
  Var gather_rows(Var a, std::vector<long> index);
  Var reshape(Var a, Shape shape);
  Var concat_cols(Var a, Var b);
  Var stack_rows(const std::vector<Var>& parts);
  // out[t] = sum_i g[t, i] * u[t, i*d : (i+1)*d], g is [T x w], u is [T x w*d].
  Var gated_window_sum(Var g, Var u);
  // Fused GRU step: z, r, n gates stacked in that order in W [3H x in],
  // U [3H x H], b [3H].  n = tanh(W_n x + r * (U_n h) + b_n).
  Var gru_cell(Var x, Var h, Var w, Var u, Var b);

  struct Term {
    std::uint32_t input;  // index into the `inputs` list
    std::uint32_t offset; // flat element offset inside that input
  };
  // out[e] = sum of the referenced elements in terms[e].
  Var gather_sum(const std::vector<Var>& inputs,
                 const std::vector<std::vector<Term>>& terms);

  // Escape hatch for ops implemented elsewhere (the SWAN objective):
  // `backward` receives the output gradient and must return one gradient
  // per input, shaped like that input.
  using CustomBackward = std::function<std::vector<Array<Real>>(const Array<Real>& out_grad)>;
  Var custom(const std::vector<Var>& inputs, Array<Real> output, CustomBackward backward);

  // Seeds d(out)/d(out) = seed (out must be a single element) and replays.
  void backward(Var out, Real seed = Real(1));

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_ops() const { return ops_.size(); }

 private:
  struct Node {
    Array<Real> own;
    const Array<Real>* ext = nullptr;
    Array<Real> grad;
    Array<Real>* sink = nullptr;
    bool needs_grad = false;
    const Array<Real>& value() const { return ext ? *ext : own; }
  };

  Var push(Array<Real> value, bool needs_grad);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Array<Real>& grad_of(Var v);  // allocates zeros on first touch

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> ops_;
};

// Central-difference check.  `f` returns f(theta) and writes the analytic
// gradient into `grad` when it is non-null.  Returns the max over coordinates
// of |analytic - numeric| / max(1, |analytic|, |numeric|).
using GradFn = std::function<double(const Array<double>& theta, Array<double>* grad)>;
double grad_check(const GradFn& f, const Array<double>& theta, double eps = 1e-5);

}  // namespace npmt
