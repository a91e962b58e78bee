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

// Segment probabilities and the marginal over segmentations.
//
// Every input position t emits one segment (possibly empty) terminated by
// the end-of-segment symbol; the output is the concatenation of all
// segments.  p(y | x) sums the product of segment probabilities over every
// way of cutting y into exactly T' such segments, each at most L tokens.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "npmt/layers.hpp"
#include "npmt/numcore.hpp"

namespace npmt {

struct SwanConfig {
  std::size_t max_segment_len = 6;  // L
  std::size_t vocab_size = 0;       // target vocabulary, end-of-segment included
  TokenId eos = 2;                  // end-of-segment id
};

// x_t enters only through the initial hidden state of each decoder layer.
template <typename Real>
struct SegmentDecoderParams {
  std::vector<Array<Real>> init_w;  // per layer [H x in]
  std::vector<Array<Real>> init_b;  // per layer [H]
  Array<Real> start;                // [1 x e] first-step input
  Array<Real> embedding;            // [V x e] previous-token input
  std::vector<GruParams<Real>> layers;
  Array<Real> out_w;  // [V x H]
  Array<Real> out_b;  // [V]

  std::size_t hidden() const { return out_w.cols(); }
  std::size_t vocab() const { return out_w.rows(); }
  std::size_t input_dim() const { return init_w.empty() ? 0 : init_w.front().cols(); }
};

template <typename Real>
SegmentDecoderParams<Real> make_segment_decoder(std::size_t input_dim, std::size_t vocab,
                                                std::size_t embed_dim, std::size_t hidden,
                                                std::size_t num_layers);

template <typename Real>
void init_segment_decoder(SegmentDecoderParams<Real>& p, Rng& rng, double scale = 0.1);

template <typename Real, typename F>
void visit_segment_decoder(SegmentDecoderParams<Real>& p, const std::string& prefix, F&& f) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    f(prefix + "init" + std::to_string(l) + ".w", p.init_w[l]);
    f(prefix + "init" + std::to_string(l) + ".b", p.init_b[l]);
  }
  f(prefix + "start", p.start);
  f(prefix + "embedding", p.embedding);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string q = prefix + "layer" + std::to_string(l) + ".";
    f(q + "w", p.layers[l].w);
    f(q + "u", p.layers[l].u);
    f(q + "b", p.layers[l].b);
  }
  f(prefix + "out.w", p.out_w);
  f(prefix + "out.b", p.out_b);
}

// logp(t, j, k) = log p(y_{j+1..j+k} $ | x_t) with 0-based t in [0, T'),
// j in [0, T], k in [0, min(L, T - j)].
template <typename Real>
class SegmentLattice {
 public:
  SegmentLattice() = default;
  SegmentLattice(std::size_t input_len, std::size_t target_len, std::size_t max_len,
                 Real fill = neg_inf<Real>());

  std::size_t input_len() const { return input_len_; }
  std::size_t target_len() const { return target_len_; }
  std::size_t max_len() const { return max_len_; }
  std::size_t max_k(std::size_t j) const {
    return std::min(max_len_, target_len_ - j);
  }
  std::size_t index(std::size_t t, std::size_t j, std::size_t k) const {
    return t * block_ + offsets_[j] + k;
  }
  Real& at(std::size_t t, std::size_t j, std::size_t k) { return logp_[index(t, j, k)]; }
  Real at(std::size_t t, std::size_t j, std::size_t k) const { return logp_[index(t, j, k)]; }

  std::size_t size() const { return logp_.size(); }
  std::span<Real> values() { return logp_; }
  std::span<const Real> values() const { return logp_; }
  void assign(std::span<const Real> flat);

 private:
  std::size_t input_len_ = 0, target_len_ = 0, max_len_ = 0, block_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<Real> logp_;
};

// One (possibly empty) segment per input position.
struct SegmentedOutput {
  std::vector<std::vector<TokenId>> segments;

  std::vector<TokenId> tokens() const;
  std::size_t num_positions() const { return segments.size(); }
};

// Forward-only segment decoder used by greedy/beam decoding and sampling.
// Rows are evaluated one at a time, so results for a position never depend
// on what else is being decoded.
template <typename Real>
class SegmentDecoder {
 public:
  struct State {
    std::vector<Array<Real>> h;  // per layer [1 x H]
  };

  SegmentDecoder(const SegmentDecoderParams<Real>& p, const SwanConfig& cfg);

  State initial(std::span<const Real> x_row) const;
  // Advances the state by one input (the start embedding when `input` < 0)
  // and writes log p(next | state) into `logp` ([V]).
  void step(State& s, TokenId input, Array<Real>& logp) const;

  const SwanConfig& config() const { return cfg_; }

 private:
  const SegmentDecoderParams<Real>& p_;
  SwanConfig cfg_;
};

// ---- lattice construction

template <typename Real>
SegmentLattice<Real> build_segment_lattice(const Array<Real>& x, std::span<const TokenId> y,
                                           const SwanConfig& cfg,
                                           const SegmentDecoderParams<Real>& p);

// Tape version; returns the flat lattice in SegmentLattice layout.
template <typename Real>
typename Tape<Real>::Var build_lattice_on_tape(Tape<Real>& tape, typename Tape<Real>::Var x,
                                               std::span<const TokenId> y, const SwanConfig& cfg,
                                               const SegmentDecoderParams<Real>& p,
                                               SegmentDecoderParams<Real>* grads);

// ---- dynamic programming

// alpha(t, j): log-prob that x_{1..t} emitted exactly y_{1..j}; [T'+1 x T+1].
template <typename Real>
Array<Real> swan_alpha(const SegmentLattice<Real>& lat);
// beta(t, j): log-prob that x_{t+1..T'} emit exactly y_{j+1..T}.
template <typename Real>
Array<Real> swan_beta(const SegmentLattice<Real>& lat);

template <typename Real>
Real swan_loglik(const SegmentLattice<Real>& lat);

// Posterior of every lattice cell being used, which is d loglik / d logp.
template <typename Real>
SegmentLattice<Real> swan_grad(const SegmentLattice<Real>& lat);

// Exhaustive sum over segmentations; refuses more than `limit` of them.
template <typename Real>
Real brute_force_loglik(const SegmentLattice<Real>& lat, std::size_t limit = 1000000);

// loglik as a tape node over a flat lattice built by build_lattice_on_tape.
template <typename Real>
typename Tape<Real>::Var swan_loglik_on_tape(Tape<Real>& tape, typename Tape<Real>::Var lattice,
                                             std::size_t input_len, std::size_t target_len,
                                             std::size_t max_len);

// ---- generation

template <typename Real>
SegmentedOutput swan_sample(const Array<Real>& x, const SegmentDecoderParams<Real>& p,
                            const SwanConfig& cfg, Rng& rng);

}  // namespace npmt
