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

#include "npmt/swan.hpp"

#include <cmath>

namespace npmt {

// ---------------------------------------------------------------- params

template <typename Real>
SegmentDecoderParams<Real> make_segment_decoder(std::size_t input_dim, std::size_t vocab,
                                                std::size_t embed_dim, std::size_t hidden,
                                                std::size_t num_layers) {
  if (num_layers == 0) throw Error(ErrorCode::kConfig, "segment decoder needs at least one layer");
  SegmentDecoderParams<Real> p;
  for (std::size_t l = 0; l < num_layers; ++l) {
    p.init_w.emplace_back(Shape{hidden, input_dim});
    p.init_b.emplace_back(Shape{hidden});
    p.layers.push_back(make_gru<Real>(l == 0 ? embed_dim : hidden, hidden));
  }
  p.start = Array<Real>(Shape{1, embed_dim});
  p.embedding = Array<Real>(Shape{vocab, embed_dim});
  p.out_w = Array<Real>(Shape{vocab, hidden});
  p.out_b = Array<Real>(Shape{vocab});
  return p;
}

template <typename Real>
void init_segment_decoder(SegmentDecoderParams<Real>& p, Rng& rng, double scale) {
  visit_segment_decoder(p, "", [&](const std::string& name, Array<Real>& a) {
    if (name.ends_with(".b"))
      a.fill(Real(0));
    else
      fill_uniform(a, rng, scale);
  });
}

// ---------------------------------------------------------------- lattice

template <typename Real>
SegmentLattice<Real>::SegmentLattice(std::size_t input_len, std::size_t target_len,
                                     std::size_t max_len, Real fill)
    : input_len_(input_len), target_len_(target_len), max_len_(max_len) {
  if (max_len == 0) throw Error(ErrorCode::kConfig, "max segment length must be >= 1");
  offsets_.resize(target_len + 1);
  std::size_t at = 0;
  for (std::size_t j = 0; j <= target_len; ++j) {
    offsets_[j] = at;
    at += max_k(j) + 1;
  }
  block_ = at;
  logp_.assign(block_ * input_len, fill);
}

template <typename Real>
void SegmentLattice<Real>::assign(std::span<const Real> flat) {
  if (flat.size() != logp_.size())
    throw Error(ErrorCode::kDimension, "lattice: expected " + std::to_string(logp_.size()) +
                                           " cells, got " + std::to_string(flat.size()));
  std::copy(flat.begin(), flat.end(), logp_.begin());
}

std::vector<TokenId> SegmentedOutput::tokens() const {
  std::vector<TokenId> out;
  for (const auto& s : segments) out.insert(out.end(), s.begin(), s.end());
  return out;
}

// ---------------------------------------------------------------- decoder

template <typename Real>
SegmentDecoder<Real>::SegmentDecoder(const SegmentDecoderParams<Real>& p, const SwanConfig& cfg)
    : p_(p), cfg_(cfg) {
  if (cfg_.vocab_size != p.vocab())
    throw Error(ErrorCode::kConfig, "segment decoder: config vocab " +
                                        std::to_string(cfg_.vocab_size) + " vs params vocab " +
                                        std::to_string(p.vocab()));
}

template <typename Real>
typename SegmentDecoder<Real>::State SegmentDecoder<Real>::initial(
    std::span<const Real> x_row) const {
  Array<Real> x(Shape{1, x_row.size()}, std::vector<Real>(x_row.begin(), x_row.end()));
  State s;
  for (std::size_t l = 0; l < p_.layers.size(); ++l) {
    Array<Real> h;
    kernels::affine_rows(p_.init_w[l], x, &p_.init_b[l], h);
    for (auto& v : h.values()) v = std::tanh(v);
    s.h.push_back(std::move(h));
  }
  return s;
}

namespace {

template <typename Real>
void gru_row(const GruParams<Real>& p, const Array<Real>& x, Array<Real>& h) {
  Array<Real> a, c;
  kernels::affine_rows(p.w, x, static_cast<const Array<Real>*>(nullptr), a);
  kernels::affine_rows(p.u, h, static_cast<const Array<Real>*>(nullptr), c);
  const std::size_t H = p.hidden();
  for (std::size_t j = 0; j < H; ++j) {
    const Real z = stable_sigmoid(a[j] + c[j] + p.b[j]);
    const Real r = stable_sigmoid(a[H + j] + c[H + j] + p.b[H + j]);
    const Real n = std::tanh(a[2 * H + j] + r * c[2 * H + j] + p.b[2 * H + j]);
    h[j] = (Real(1) - z) * n + z * h[j];
  }
}

}  // namespace

template <typename Real>
void SegmentDecoder<Real>::step(State& s, TokenId input, Array<Real>& logp) const {
  const std::size_t e = p_.embedding.cols();
  Array<Real> in(Shape{1, e});
  if (input < 0) {
    std::copy_n(p_.start.data(), e, in.data());
  } else {
    if (static_cast<std::size_t>(input) >= p_.embedding.rows())
      throw Error(ErrorCode::kOutOfVocab, "segment decoder: token " + std::to_string(input));
    std::copy_n(p_.embedding.data() + input * e, e, in.data());
  }
  for (std::size_t l = 0; l < p_.layers.size(); ++l) {
    gru_row(p_.layers[l], l == 0 ? in : s.h[l - 1], s.h[l]);
  }
  kernels::affine_rows(p_.out_w, s.h.back(), &p_.out_b, logp);
  kernels::log_softmax_rows(logp, logp);
  logp.reshape(Shape{p_.vocab()});
}

// ---------------------------------------------------------------- tape lattice

template <typename Real>
typename Tape<Real>::Var build_lattice_on_tape(Tape<Real>& tape, typename Tape<Real>::Var x,
                                               std::span<const TokenId> y, const SwanConfig& cfg,
                                               const SegmentDecoderParams<Real>& p,
                                               SegmentDecoderParams<Real>* grads) {
  using Var = typename Tape<Real>::Var;
  using Term = typename Tape<Real>::Term;
  const std::size_t Tp = tape.value(x).rows();
  const std::size_t T = y.size();
  const std::size_t L = cfg.max_segment_len;
  const std::size_t V = p.vocab();
  const std::size_t nl = p.layers.size();
  if (Tp == 0) throw Error(ErrorCode::kEmptyInput, "lattice: empty input");
  if (V != cfg.vocab_size) throw Error(ErrorCode::kConfig, "lattice: vocab size mismatch");
  for (TokenId tok : y)
    if (tok < 0 || static_cast<std::size_t>(tok) >= V)
      throw Error(ErrorCode::kOutOfVocab, "lattice: target token " + std::to_string(tok));

  auto bind = [&](const Array<Real>& a, Array<Real>* g) { return tape.param(a, g); };
  std::vector<BoundGru<Real>> gru;
  std::vector<Var> states(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    gru.push_back(bind_gru(tape, p.layers[l], grads ? &grads->layers[l] : nullptr));
    auto w = bind(p.init_w[l], grads ? &grads->init_w[l] : nullptr);
    auto b = bind(p.init_b[l], grads ? &grads->init_b[l] : nullptr);
    states[l] = tape.tanh(tape.affine(w, x, b));
  }
  auto start = bind(p.start, grads ? &grads->start : nullptr);
  auto emb = bind(p.embedding, grads ? &grads->embedding : nullptr);
  auto ow = bind(p.out_w, grads ? &grads->out_w : nullptr);
  auto ob = bind(p.out_b, grads ? &grads->out_b : nullptr);

  auto run_stack = [&](Var in) {
    for (std::size_t l = 0; l < nl; ++l) {
      states[l] = gru_on_tape(tape, in, states[l], gru[l]);
      in = states[l];
    }
    return tape.log_softmax(tape.affine(ow, in, ob));
  };

  // Step s consumes s target tokens; row (t, j) exists while j + s <= T.
  const std::size_t steps = std::min(L, T);
  std::vector<Var> dists;
  dists.push_back(run_stack(tape.gather_rows(start, std::vector<long>(Tp, 0))));
  auto row_of = [&](std::size_t s, std::size_t t, std::size_t j) -> std::size_t {
    return s == 0 ? t : t * (T - s + 1) + j;
  };
  for (std::size_t s = 1; s <= steps; ++s) {
    std::vector<long> parents, tokens;
    parents.reserve(Tp * (T - s + 1));
    for (std::size_t t = 0; t < Tp; ++t)
      for (std::size_t j = 0; j + s <= T; ++j) {
        parents.push_back(static_cast<long>(row_of(s - 1, t, j)));
        tokens.push_back(y[j + s - 1]);
      }
    for (std::size_t l = 0; l < nl; ++l) states[l] = tape.gather_rows(states[l], parents);
    dists.push_back(run_stack(tape.gather_rows(emb, std::move(tokens))));
  }

  SegmentLattice<Real> layout(Tp, T, L, Real(0));
  std::vector<std::vector<Term>> terms(layout.size());
  for (std::size_t t = 0; t < Tp; ++t)
    for (std::size_t j = 0; j <= T; ++j)
      for (std::size_t k = 0; k <= layout.max_k(j); ++k) {
        auto& cell = terms[layout.index(t, j, k)];
        for (std::size_t s = 0; s < k; ++s)
          cell.push_back({static_cast<std::uint32_t>(s),
                          static_cast<std::uint32_t>(row_of(s, t, j) * V + y[j + s])});
        cell.push_back({static_cast<std::uint32_t>(k),
                        static_cast<std::uint32_t>(row_of(k, t, j) * V + cfg.eos)});
      }
  return tape.gather_sum(dists, terms);
}

template <typename Real>
SegmentLattice<Real> build_segment_lattice(const Array<Real>& x, std::span<const TokenId> y,
                                           const SwanConfig& cfg,
                                           const SegmentDecoderParams<Real>& p) {
  Tape<Real> tape;
  auto flat = build_lattice_on_tape<Real>(tape, tape.param(x, nullptr), y, cfg, p, nullptr);
  SegmentLattice<Real> lat(x.rows(), y.size(), cfg.max_segment_len);
  lat.assign(tape.value(flat).values());
  return lat;
}

// ---------------------------------------------------------------- DP

template <typename Real>
Array<Real> swan_alpha(const SegmentLattice<Real>& lat) {
  const std::size_t Tp = lat.input_len(), T = lat.target_len(), L = lat.max_len();
  Array<Real> alpha(Shape{Tp + 1, T + 1}, neg_inf<Real>());
  alpha(0, 0) = Real(0);
  std::vector<Real> terms;
  for (std::size_t t = 1; t <= Tp; ++t)
    for (std::size_t j = 0; j <= T; ++j) {
      terms.clear();
      for (std::size_t k = 0; k <= std::min(L, j); ++k) {
        const Real a = alpha(t - 1, j - k);
        if (a == neg_inf<Real>()) continue;
        terms.push_back(a + lat.at(t - 1, j - k, k));
      }
      alpha(t, j) = logsumexp<Real>(terms);
    }
  return alpha;
}

template <typename Real>
Array<Real> swan_beta(const SegmentLattice<Real>& lat) {
  const std::size_t Tp = lat.input_len(), T = lat.target_len();
  Array<Real> beta(Shape{Tp + 1, T + 1}, neg_inf<Real>());
  beta(Tp, T) = Real(0);
  std::vector<Real> terms;
  for (std::size_t t = Tp; t-- > 0;)
    for (std::size_t j = 0; j <= T; ++j) {
      terms.clear();
      for (std::size_t k = 0; k <= lat.max_k(j); ++k) {
        const Real b = beta(t + 1, j + k);
        if (b == neg_inf<Real>()) continue;
        terms.push_back(lat.at(t, j, k) + b);
      }
      beta(t, j) = logsumexp<Real>(terms);
    }
  return beta;
}

template <typename Real>
Real swan_loglik(const SegmentLattice<Real>& lat) {
  if (lat.input_len() == 0) return lat.target_len() == 0 ? Real(0) : neg_inf<Real>();
  const auto alpha = swan_alpha(lat);
  return alpha(lat.input_len(), lat.target_len());
}

template <typename Real>
SegmentLattice<Real> swan_grad(const SegmentLattice<Real>& lat) {
  const auto alpha = swan_alpha(lat);
  const auto beta = swan_beta(lat);
  const Real ll = alpha(lat.input_len(), lat.target_len());
  if (!std::isfinite(ll))
    throw Error(ErrorCode::kUndefined, "swan_grad: log-likelihood is -inf, gradient undefined");
  SegmentLattice<Real> post(lat.input_len(), lat.target_len(), lat.max_len(), Real(0));
  for (std::size_t t = 0; t < lat.input_len(); ++t)
    for (std::size_t j = 0; j <= lat.target_len(); ++j) {
      const Real a = alpha(t, j);
      if (a == neg_inf<Real>()) continue;
      for (std::size_t k = 0; k <= lat.max_k(j); ++k) {
        const Real b = beta(t + 1, j + k);
        if (b == neg_inf<Real>()) continue;
        post.at(t, j, k) = std::exp(a + lat.at(t, j, k) + b - ll);
      }
    }
  return post;
}

template <typename Real>
Real brute_force_loglik(const SegmentLattice<Real>& lat, std::size_t limit) {
  const std::size_t Tp = lat.input_len(), T = lat.target_len(), L = lat.max_len();
  // Count compositions first so oversized instances fail fast.
  std::vector<double> count(T + 1, 0.0);
  count[0] = 1.0;
  for (std::size_t t = 0; t < Tp; ++t) {
    std::vector<double> next(T + 1, 0.0);
    for (std::size_t j = 0; j <= T; ++j)
      for (std::size_t k = 0; k <= L && j + k <= T; ++k) next[j + k] += count[j];
    count = std::move(next);
  }
  if (count[T] > static_cast<double>(limit))
    throw Error(ErrorCode::kSize, "brute_force_loglik: " + std::to_string(count[T]) +
                                      " segmentations exceed limit " + std::to_string(limit));
  std::vector<Real> paths;
  std::vector<std::size_t> parts(Tp, 0);
  auto rec = [&](auto&& self, std::size_t t, std::size_t j) -> void {
    if (t == Tp) {
      if (j != T) return;
      Real s = 0;
      std::size_t at = 0;
      for (std::size_t u = 0; u < Tp; ++u) {
        s += lat.at(u, at, parts[u]);
        at += parts[u];
      }
      paths.push_back(s);
      return;
    }
    for (std::size_t k = 0; k <= L && j + k <= T; ++k) {
      parts[t] = k;
      self(self, t + 1, j + k);
    }
  };
  rec(rec, 0, 0);
  return logsumexp<Real>(paths);
}

template <typename Real>
typename Tape<Real>::Var swan_loglik_on_tape(Tape<Real>& tape, typename Tape<Real>::Var lattice,
                                             std::size_t input_len, std::size_t target_len,
                                             std::size_t max_len) {
  SegmentLattice<Real> lat(input_len, target_len, max_len);
  lat.assign(tape.value(lattice).values());
  const Real ll = swan_loglik(lat);
  return tape.custom({lattice}, Array<Real>(Shape{1}, ll),
                     [lat = std::move(lat)](const Array<Real>& g) {
                       const auto post = swan_grad(lat);
                       Array<Real> out(Shape{post.size()});
                       for (std::size_t i = 0; i < post.size(); ++i)
                         out[i] = g[0] * post.values()[i];
                       return std::vector<Array<Real>>{std::move(out)};
                     });
}

// ---------------------------------------------------------------- sampling

template <typename Real>
SegmentedOutput swan_sample(const Array<Real>& x, const SegmentDecoderParams<Real>& p,
                            const SwanConfig& cfg, Rng& rng) {
  SegmentDecoder<Real> dec(p, cfg);
  SegmentedOutput out;
  Array<Real> logp;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto state = dec.initial(x.row_span(t));
    std::vector<TokenId> seg;
    TokenId input = -1;
    while (true) {
      dec.step(state, input, logp);
      if (seg.size() == cfg.max_segment_len) break;  // forced end of segment
      const double u = unif(rng);
      double acc = 0;
      TokenId pick = static_cast<TokenId>(logp.size() - 1);
      for (std::size_t v = 0; v < logp.size(); ++v) {
        acc += std::exp(static_cast<double>(logp[v]));
        if (u < acc) {
          pick = static_cast<TokenId>(v);
          break;
        }
      }
      if (pick == cfg.eos) break;
      seg.push_back(pick);
      input = pick;
    }
    out.segments.push_back(std::move(seg));
  }
  return out;
}

#define NPMT_INSTANTIATE(Real)                                                                   \
  template class SegmentLattice<Real>;                                                           \
  template class SegmentDecoder<Real>;                                                           \
  template SegmentDecoderParams<Real> make_segment_decoder<Real>(std::size_t, std::size_t,       \
                                                                 std::size_t, std::size_t,       \
                                                                 std::size_t);                   \
  template void init_segment_decoder<Real>(SegmentDecoderParams<Real>&, Rng&, double);           \
  template Tape<Real>::Var build_lattice_on_tape<Real>(                                          \
      Tape<Real>&, Tape<Real>::Var, std::span<const TokenId>, const SwanConfig&,                 \
      const SegmentDecoderParams<Real>&, SegmentDecoderParams<Real>*);                           \
  template SegmentLattice<Real> build_segment_lattice<Real>(                                     \
      const Array<Real>&, std::span<const TokenId>, const SwanConfig&,                           \
      const SegmentDecoderParams<Real>&);                                                        \
  template Array<Real> swan_alpha<Real>(const SegmentLattice<Real>&);                            \
  template Array<Real> swan_beta<Real>(const SegmentLattice<Real>&);                             \
  template Real swan_loglik<Real>(const SegmentLattice<Real>&);                                  \
  template SegmentLattice<Real> swan_grad<Real>(const SegmentLattice<Real>&);                    \
  template Real brute_force_loglik<Real>(const SegmentLattice<Real>&, std::size_t);              \
  template Tape<Real>::Var swan_loglik_on_tape<Real>(Tape<Real>&, Tape<Real>::Var, std::size_t,  \
                                                     std::size_t, std::size_t);                  \
  template SegmentedOutput swan_sample<Real>(const Array<Real>&,                                 \
                                             const SegmentDecoderParams<Real>&,                  \
                                             const SwanConfig&, Rng&);

NPMT_INSTANTIATE(float)
NPMT_INSTANTIATE(double)
#undef NPMT_INSTANTIATE

}  // namespace npmt
