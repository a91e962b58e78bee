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

#include "npmt/layers.hpp"

#include <string>

namespace npmt {

template <typename Real>
void fill_uniform(Array<Real>& a, Rng& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& v : a.values()) v = static_cast<Real>(dist(rng));
}

template <typename Real>
GruParams<Real> make_gru(std::size_t input, std::size_t hidden) {
  GruParams<Real> p;
  p.w = Array<Real>(Shape{3 * hidden, input});
  p.u = Array<Real>(Shape{3 * hidden, hidden});
  p.b = Array<Real>(Shape{3 * hidden});
  return p;
}

template <typename Real>
EncoderStack<Real> make_encoder(std::size_t vocab, std::size_t embed_dim, bool use_reordering,
                                std::size_t tau, std::size_t hidden, std::size_t num_layers,
                                double dropout) {
  EncoderStack<Real> enc;
  enc.embedding = Array<Real>(Shape{vocab, embed_dim});
  enc.use_reordering = use_reordering;
  enc.reorder.tau = tau;
  const std::size_t w = 2 * tau + 1;
  if (use_reordering) enc.reorder.gates = Array<Real>(Shape{w, w * embed_dim});
  std::size_t in = embed_dim;
  for (std::size_t l = 0; l < num_layers; ++l) {
    enc.layers.push_back({make_gru<Real>(in, hidden), make_gru<Real>(in, hidden)});
    in = 2 * hidden;
  }
  enc.dropout = dropout;
  return enc;
}

template <typename Real>
void init_encoder(EncoderStack<Real>& enc, Rng& rng, double scale) {
  visit_encoder(enc, "", [&](const std::string& name, Array<Real>& a) {
    if (name.ends_with(".b"))
      a.fill(Real(0));
    else
      fill_uniform(a, rng, scale);
  });
}

// ---------------------------------------------------------------- tape

template <typename Real>
typename Tape<Real>::Var embed_on_tape(Tape<Real>& tape, std::span<const TokenId> tokens,
                                       const Array<Real>& table, Array<Real>* grad) {
  std::vector<long> idx;
  idx.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= table.rows())
      throw Error(ErrorCode::kOutOfVocab, "embed: token id " + std::to_string(t) +
                                              " outside vocabulary of size " +
                                              std::to_string(table.rows()));
    idx.push_back(t);
  }
  auto tv = tape.param(table, grad);
  return tape.gather_rows(tv, std::move(idx));
}

template <typename Real>
typename Tape<Real>::Var reorder_on_tape(Tape<Real>& tape, typename Tape<Real>::Var e,
                                         const ReorderingParams<Real>& p,
                                         ReorderingParams<Real>* grads,
                                         typename Tape<Real>::Var* gates_out) {
  const auto& E = tape.value(e);
  const std::size_t T = E.rows(), d = E.cols(), w = p.window();
  if (p.gates.rows() != w || p.gates.cols() != w * d)
    throw Error(ErrorCode::kDimension, "reorder: gate weights " + shape_string(p.gates.shape()) +
                                           " do not match window " + std::to_string(w) +
                                           " and width " + std::to_string(d));
  std::vector<long> widx;
  widx.reserve(T * w);
  const long tau = static_cast<long>(p.tau);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < w; ++i) {
      const long src = static_cast<long>(t) - tau + static_cast<long>(i);
      widx.push_back(src >= 0 && src < static_cast<long>(T) ? src : -1);
    }
  auto u = tape.reshape(tape.gather_rows(e, std::move(widx)), Shape{T, w * d});
  auto wg = tape.param(p.gates, grads ? &grads->gates : nullptr);
  auto g = tape.sigmoid(tape.affine(wg, u));
  if (gates_out) *gates_out = g;
  return tape.tanh(tape.gated_window_sum(g, u));
}

template <typename Real>
BoundGru<Real> bind_gru(Tape<Real>& tape, const GruParams<Real>& p, GruParams<Real>* grads) {
  BoundGru<Real> g;
  g.w = tape.param(p.w, grads ? &grads->w : nullptr);
  g.u = tape.param(p.u, grads ? &grads->u : nullptr);
  g.b = tape.param(p.b, grads ? &grads->b : nullptr);
  g.hidden = p.hidden();
  return g;
}

template <typename Real>
EncodedSource<Real> encode_on_tape(Tape<Real>& tape, std::span<const TokenId> tokens,
                                   const EncoderStack<Real>& enc, EncoderStack<Real>* grads,
                                   bool training, Rng* rng) {
  if (tokens.empty()) throw Error(ErrorCode::kEmptyInput, "encode_source: empty input sentence");
  using Var = typename Tape<Real>::Var;
  EncodedSource<Real> out;
  Var z = embed_on_tape(tape, tokens, enc.embedding, grads ? &grads->embedding : nullptr);
  if (enc.use_reordering)
    z = reorder_on_tape(tape, z, enc.reorder, grads ? &grads->reorder : nullptr, &out.gates);
  const std::size_t T = tokens.size();
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    const auto& layer = enc.layers[l];
    auto* lg = grads ? &grads->layers[l] : nullptr;
    const auto fw = bind_gru(tape, layer.fwd, lg ? &lg->fwd : nullptr);
    const auto bw = bind_gru(tape, layer.bwd, lg ? &lg->bwd : nullptr);
    std::vector<Var> fwd_states(T), bwd_states(T);
    Var h = tape.constant(Array<Real>(Shape{1, fw.hidden}));
    for (std::size_t t = 0; t < T; ++t) {
      h = gru_on_tape(tape, tape.gather_rows(z, {static_cast<long>(t)}), h, fw);
      fwd_states[t] = h;
    }
    h = tape.constant(Array<Real>(Shape{1, bw.hidden}));
    for (std::size_t t = T; t-- > 0;) {
      h = gru_on_tape(tape, tape.gather_rows(z, {static_cast<long>(t)}), h, bw);
      bwd_states[t] = h;
    }
    z = tape.concat_cols(tape.stack_rows(fwd_states), tape.stack_rows(bwd_states));
    if (training && enc.dropout > 0.0) {
      if (!rng) throw Error(ErrorCode::kInvalidArgument, "encode_source: dropout needs an rng");
      const double keep = 1.0 - enc.dropout;
      std::bernoulli_distribution coin(keep);
      Array<Real> mask(tape.value(z).shape());
      for (auto& m : mask.values()) m = coin(*rng) ? static_cast<Real>(1.0 / keep) : Real(0);
      z = tape.mul_const(z, mask);
    }
  }
  out.x = z;
  return out;
}

// ---------------------------------------------------------------- forward-only

template <typename Real>
Array<Real> embed(std::span<const TokenId> tokens, const Array<Real>& table) {
  if (tokens.empty()) return Array<Real>(Shape{0, table.cols()});
  Tape<Real> tape;
  return tape.value(embed_on_tape<Real>(tape, tokens, table, nullptr));
}

template <typename Real>
Array<Real> reorder(const Array<Real>& e, const ReorderingParams<Real>& p) {
  Tape<Real> tape;
  auto ev = tape.param(e, nullptr);
  return tape.value(reorder_on_tape<Real>(tape, ev, p, nullptr));
}

template <typename Real>
Array<Real> reorder_gates(const Array<Real>& e, const ReorderingParams<Real>& p) {
  Tape<Real> tape;
  auto ev = tape.param(e, nullptr);
  typename Tape<Real>::Var g;
  reorder_on_tape<Real>(tape, ev, p, nullptr, &g);
  return tape.value(g);
}

template <typename Real>
Array<Real> gru_cell(const Array<Real>& x, const Array<Real>& h, const GruParams<Real>& p) {
  Tape<Real> tape;
  auto g = bind_gru<Real>(tape, p, nullptr);
  return tape.value(gru_on_tape(tape, tape.param(x, nullptr), tape.param(h, nullptr), g));
}

template <typename Real>
Array<Real> encode_source(std::span<const TokenId> tokens, const EncoderStack<Real>& enc,
                          bool training, Rng* rng) {
  Tape<Real> tape;
  return tape.value(encode_on_tape<Real>(tape, tokens, enc, nullptr, training, rng).x);
}

#define NPMT_INSTANTIATE(Real)                                                                   \
  template void fill_uniform<Real>(Array<Real>&, Rng&, double);                                  \
  template GruParams<Real> make_gru<Real>(std::size_t, std::size_t);                             \
  template EncoderStack<Real> make_encoder<Real>(std::size_t, std::size_t, bool, std::size_t,    \
                                                 std::size_t, std::size_t, double);              \
  template void init_encoder<Real>(EncoderStack<Real>&, Rng&, double);                           \
  template Tape<Real>::Var embed_on_tape<Real>(Tape<Real>&, std::span<const TokenId>,            \
                                               const Array<Real>&, Array<Real>*);                \
  template Tape<Real>::Var reorder_on_tape<Real>(Tape<Real>&, Tape<Real>::Var,                   \
                                                 const ReorderingParams<Real>&,                  \
                                                 ReorderingParams<Real>*, Tape<Real>::Var*);     \
  template BoundGru<Real> bind_gru<Real>(Tape<Real>&, const GruParams<Real>&, GruParams<Real>*); \
  template EncodedSource<Real> encode_on_tape<Real>(Tape<Real>&, std::span<const TokenId>,       \
                                                    const EncoderStack<Real>&,                   \
                                                    EncoderStack<Real>*, bool, Rng*);            \
  template Array<Real> embed<Real>(std::span<const TokenId>, const Array<Real>&);                \
  template Array<Real> reorder<Real>(const Array<Real>&, const ReorderingParams<Real>&);         \
  template Array<Real> reorder_gates<Real>(const Array<Real>&, const ReorderingParams<Real>&);   \
  template Array<Real> gru_cell<Real>(const Array<Real>&, const Array<Real>&,                    \
                                      const GruParams<Real>&);                                   \
  template Array<Real> encode_source<Real>(std::span<const TokenId>, const EncoderStack<Real>&,  \
                                           bool, Rng*);

NPMT_INSTANTIATE(float)
NPMT_INSTANTIATE(double)
#undef NPMT_INSTANTIATE

}  // namespace npmt
