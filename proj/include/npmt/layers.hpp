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

// Source-side layers: embedding lookup, the gated local reordering layer,
// GRU cells and the stacked bi-directional encoder.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "npmt/numcore.hpp"

namespace npmt {

using TokenId = std::int32_t;
using Rng = std::mt19937_64;

// Window of 2*tau+1 positions; gate i looks at the whole window and scales
// the embedding at offset i - tau.
template <typename Real>
struct ReorderingParams {
  std::size_t tau = 3;
  Array<Real> gates;  // [(2tau+1) x (2tau+1)*d], row i is w_i

  std::size_t window() const { return 2 * tau + 1; }
};

template <typename Real>
struct GruParams {
  Array<Real> w;  // [3H x in], gate rows ordered z, r, n
  Array<Real> u;  // [3H x H]
  Array<Real> b;  // [3H]

  std::size_t hidden() const { return u.cols(); }
  std::size_t input() const { return w.cols(); }
};

template <typename Real>
struct BiGruLayer {
  GruParams<Real> fwd;
  GruParams<Real> bwd;
};

template <typename Real>
struct EncoderStack {
  Array<Real> embedding;  // [V x d]
  bool use_reordering = true;
  ReorderingParams<Real> reorder;
  std::vector<BiGruLayer<Real>> layers;
  double dropout = 0.0;

  std::size_t embed_dim() const { return embedding.cols(); }
  std::size_t output_dim() const {
    return layers.empty() ? embed_dim() : 2 * layers.back().fwd.hidden();
  }
};

template <typename Real>
GruParams<Real> make_gru(std::size_t input, std::size_t hidden);

template <typename Real>
EncoderStack<Real> make_encoder(std::size_t vocab, std::size_t embed_dim, bool use_reordering,
                                std::size_t tau, std::size_t hidden, std::size_t num_layers,
                                double dropout);

// Uniform(-scale, scale) on every weight, zero on every bias.
template <typename Real>
void init_encoder(EncoderStack<Real>& enc, Rng& rng, double scale = 0.1);

template <typename Real>
void fill_uniform(Array<Real>& a, Rng& rng, double scale);

// Visits (name, array) in a fixed order; `prefix` is prepended to names.
template <typename Real, typename F>
void visit_encoder(EncoderStack<Real>& enc, const std::string& prefix, F&& f) {
  f(prefix + "embedding", enc.embedding);
  if (enc.use_reordering) f(prefix + "reorder.gates", enc.reorder.gates);
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    f(p + "fwd.w", enc.layers[l].fwd.w);
    f(p + "fwd.u", enc.layers[l].fwd.u);
    f(p + "fwd.b", enc.layers[l].fwd.b);
    f(p + "bwd.w", enc.layers[l].bwd.w);
    f(p + "bwd.u", enc.layers[l].bwd.u);
    f(p + "bwd.b", enc.layers[l].bwd.b);
  }
}

// ---- forward-only entry points

template <typename Real>
Array<Real> embed(std::span<const TokenId> tokens, const Array<Real>& table);

template <typename Real>
Array<Real> reorder(const Array<Real>& e, const ReorderingParams<Real>& p);

// Gate values sigma(w_i . window_t), shape [T x (2tau+1)].
template <typename Real>
Array<Real> reorder_gates(const Array<Real>& e, const ReorderingParams<Real>& p);

template <typename Real>
Array<Real> gru_cell(const Array<Real>& x, const Array<Real>& h, const GruParams<Real>& p);

// Returns x_{1:T'} as [T' x 2H].  Dropout draws from `rng` only when training.
template <typename Real>
Array<Real> encode_source(std::span<const TokenId> tokens, const EncoderStack<Real>& enc,
                          bool training = false, Rng* rng = nullptr);

// ---- tape builders; `grads` (same layout as params) receives gradients

template <typename Real>
struct EncodedSource {
  typename Tape<Real>::Var x;      // [T' x out]
  typename Tape<Real>::Var gates;  // [T' x window], invalid without reordering
};

template <typename Real>
typename Tape<Real>::Var embed_on_tape(Tape<Real>& tape, std::span<const TokenId> tokens,
                                       const Array<Real>& table, Array<Real>* grad);

template <typename Real>
typename Tape<Real>::Var reorder_on_tape(Tape<Real>& tape, typename Tape<Real>::Var e,
                                         const ReorderingParams<Real>& p,
                                         ReorderingParams<Real>* grads,
                                         typename Tape<Real>::Var* gates_out = nullptr);

// GRU parameters bound once per tape so every time step shares one leaf.
template <typename Real>
struct BoundGru {
  typename Tape<Real>::Var w, u, b;
  std::size_t hidden = 0;
};

template <typename Real>
BoundGru<Real> bind_gru(Tape<Real>& tape, const GruParams<Real>& p, GruParams<Real>* grads);

template <typename Real>
typename Tape<Real>::Var gru_on_tape(Tape<Real>& tape, typename Tape<Real>::Var x,
                                     typename Tape<Real>::Var h, const BoundGru<Real>& g) {
  return tape.gru_cell(x, h, g.w, g.u, g.b);
}

template <typename Real>
EncodedSource<Real> encode_on_tape(Tape<Real>& tape, std::span<const TokenId> tokens,
                                   const EncoderStack<Real>& enc, EncoderStack<Real>* grads,
                                   bool training, Rng* rng);

}  // namespace npmt
