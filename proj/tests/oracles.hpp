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

// Scalar reference implementations used to cross-check the library.  They
// share no code with src/ beyond the parameter containers.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "npmt/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

template <typename Real>
Mat to_mat(const npmt::Array<Real>& a) {
  Mat m(a.rows(), Vec(a.cols()));
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) m[r][c] = a(r, c);
  return m;
}

template <typename Real>
Vec to_vec(const npmt::Array<Real>& a) {
  return Vec(a.values().begin(), a.values().end());
}

inline Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
  Mat out(n, Vec(m, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q) s += a[i][q] * b[q][j];
      out[i][j] = s;
    }
  return out;
}

inline Vec matvec(const Mat& w, const Vec& x) {
  Vec out(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) out[i] += w[i][j] * x[j];
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double lse(const Vec& xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline Vec log_softmax(const Vec& z) {
  const double l = lse(z);
  Vec out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - l;
  return out;
}

// Textbook GRU step, gates in z, r, n order.
template <typename Real>
Vec gru(const Vec& x, const Vec& h, const npmt::GruParams<Real>& p) {
  const Mat W = to_mat(p.w), U = to_mat(p.u);
  const Vec b = to_vec(p.b);
  const std::size_t H = h.size();
  const Vec wx = matvec(W, x), uh = matvec(U, h);
  Vec out(H);
  for (std::size_t i = 0; i < H; ++i) {
    const double z = sigmoid(wx[i] + uh[i] + b[i]);
    const double r = sigmoid(wx[H + i] + uh[H + i] + b[H + i]);
    const double n = std::tanh(wx[2 * H + i] + r * uh[2 * H + i] + b[2 * H + i]);
    out[i] = (1.0 - z) * n + z * h[i];
  }
  return out;
}

// Gated window with zero padding, no normalization.
template <typename Real>
Mat reorder_gates(const Mat& e, const npmt::ReorderingParams<Real>& p) {
  const long T = static_cast<long>(e.size());
  const long tau = static_cast<long>(p.tau);
  const std::size_t d = e.empty() ? 0 : e[0].size();
  const Mat G = to_mat(p.gates);
  Mat gates(e.size(), Vec(2 * tau + 1));
  for (long t = 0; t < T; ++t) {
    Vec window;
    for (long k = t - tau; k <= t + tau; ++k)
      for (std::size_t c = 0; c < d; ++c) window.push_back(k >= 0 && k < T ? e[k][c] : 0.0);
    const Vec a = matvec(G, window);
    for (long i = 0; i <= 2 * tau; ++i) gates[t][i] = sigmoid(a[i]);
  }
  return gates;
}

template <typename Real>
Mat reorder(const Mat& e, const npmt::ReorderingParams<Real>& p) {
  const long T = static_cast<long>(e.size());
  const long tau = static_cast<long>(p.tau);
  const Mat g = reorder_gates(e, p);
  Mat out(e.size(), Vec(e.empty() ? 0 : e[0].size(), 0.0));
  for (long t = 0; t < T; ++t) {
    for (long i = 0; i <= 2 * tau; ++i) {
      const long k = t - tau + i;
      if (k < 0 || k >= T) continue;
      for (std::size_t c = 0; c < out[t].size(); ++c) out[t][c] += g[t][i] * e[k][c];
    }
    for (auto& v : out[t]) v = std::tanh(v);
  }
  return out;
}

template <typename Real>
Mat encode(const std::vector<npmt::TokenId>& src, const npmt::EncoderStack<Real>& enc) {
  const Mat E = to_mat(enc.embedding);
  Mat z;
  for (auto id : src) z.push_back(E.at(id));
  if (enc.use_reordering) z = reorder(z, enc.reorder);
  for (const auto& layer : enc.layers) {
    const std::size_t H = layer.fwd.hidden();
    Mat f(z.size()), b(z.size());
    Vec h(H, 0.0);
    for (std::size_t t = 0; t < z.size(); ++t) f[t] = h = gru(z[t], h, layer.fwd);
    h.assign(H, 0.0);
    for (std::size_t t = z.size(); t-- > 0;) b[t] = h = gru(z[t], h, layer.bwd);
    for (std::size_t t = 0; t < z.size(); ++t) {
      z[t] = f[t];
      z[t].insert(z[t].end(), b[t].begin(), b[t].end());
    }
  }
  return z;
}

// log p(seg $ | x) by stepping the segment decoder one token at a time.
template <typename Real>
double segment_logp(const Vec& x, const std::vector<npmt::TokenId>& seg,
                    const npmt::SegmentDecoderParams<Real>& p, npmt::TokenId eos) {
  std::vector<Vec> h;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Vec a = matvec(to_mat(p.init_w[l]), x);
    const Vec b = to_vec(p.init_b[l]);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::tanh(a[i] + b[i]);
    h.push_back(a);
  }
  const Mat emb = to_mat(p.embedding), out_w = to_mat(p.out_w);
  const Vec start = to_vec(p.start), out_b = to_vec(p.out_b);
  double total = 0.0;
  Vec input = start;
  for (std::size_t s = 0; s <= seg.size(); ++s) {
    Vec in = input;
    for (std::size_t l = 0; l < p.layers.size(); ++l) in = h[l] = gru(in, h[l], p.layers[l]);
    Vec z = matvec(out_w, h.back());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += out_b[i];
    const Vec lp = log_softmax(z);
    const npmt::TokenId next = s < seg.size() ? seg[s] : eos;
    total += lp[next];
    if (s < seg.size()) input = emb[seg[s]];
  }
  return total;
}

// log p(. | x, prefix) over the full vocabulary, rolled out from scratch.
template <typename Real>
Vec next_logp(const Vec& x, const std::vector<npmt::TokenId>& prefix,
              const npmt::SegmentDecoderParams<Real>& p) {
  std::vector<Vec> h;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    Vec a = matvec(to_mat(p.init_w[l]), x);
    const Vec b = to_vec(p.init_b[l]);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::tanh(a[i] + b[i]);
    h.push_back(a);
  }
  const Mat emb = to_mat(p.embedding), out_w = to_mat(p.out_w);
  const Vec out_b = to_vec(p.out_b);
  Vec input = to_vec(p.start);
  for (std::size_t s = 0; s <= prefix.size(); ++s) {
    Vec in = input;
    for (std::size_t l = 0; l < p.layers.size(); ++l) in = h[l] = gru(in, h[l], p.layers[l]);
    if (s < prefix.size()) input = emb[prefix[s]];
  }
  Vec z = matvec(out_w, h.back());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += out_b[i];
  return log_softmax(z);
}

// Greedy segment for one position: argmax (lowest id on ties) until eos or
// L tokens.
template <typename Real>
std::vector<npmt::TokenId> greedy_segment(const Vec& x, const npmt::SegmentDecoderParams<Real>& p,
                                          npmt::TokenId eos, std::size_t L) {
  std::vector<npmt::TokenId> seg;
  while (seg.size() < L) {
    const Vec lp = next_logp(x, seg, p);
    npmt::TokenId best = 0;
    for (std::size_t v = 1; v < lp.size(); ++v)
      if (lp[v] > lp[best]) best = static_cast<npmt::TokenId>(v);
    if (best == eos) break;
    seg.push_back(best);
  }
  return seg;
}

// Every way of writing T as an ordered sum of Tp parts in [0, L].
inline std::vector<std::vector<std::size_t>> compositions(std::size_t Tp, std::size_t T,
                                                           std::size_t L) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t left) {
    if (cur.size() == Tp) {
      if (left == 0) out.push_back(cur);
      return;
    }
    for (std::size_t k = 0; k <= std::min(L, left); ++k) {
      cur.push_back(k);
      rec(left - k);
      cur.pop_back();
    }
  };
  rec(T);
  return out;
}

// log p(y|x) summed over explicit segmentations, each segment scored from
// scratch with `seg_logp(t, j, k)`.
inline double marginal(std::size_t Tp, std::size_t T, std::size_t L,
                       const std::function<double(std::size_t, std::size_t, std::size_t)>& seg_logp) {
  Vec paths;
  for (const auto& c : compositions(Tp, T, L)) {
    double s = 0.0;
    std::size_t j = 0;
    for (std::size_t t = 0; t < Tp; ++t) {
      s += seg_logp(t, j, c[t]);
      j += c[t];
    }
    paths.push_back(s);
  }
  return lse(paths);
}

template <typename Real>
double model_loglik(const npmt::Model<Real>& m, const std::vector<npmt::TokenId>& src,
                    const std::vector<npmt::TokenId>& tgt) {
  const Mat x = encode(src, m.enc);
  const std::size_t L = m.cfg.max_segment_len;
  return marginal(src.size(), tgt.size(), L, [&](std::size_t t, std::size_t j, std::size_t k) {
    return segment_logp(x[t], std::vector<npmt::TokenId>(tgt.begin() + j, tgt.begin() + j + k),
                        m.dec, m.cfg.eos);
  });
}

// Central differences of f around theta.
inline Vec numeric_grad(const std::function<double(const Vec&)>& f, Vec theta, double eps) {
  Vec g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = theta[i];
    theta[i] = keep + eps;
    const double up = f(theta);
    theta[i] = keep - eps;
    const double down = f(theta);
    theta[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

}  // namespace oracle
