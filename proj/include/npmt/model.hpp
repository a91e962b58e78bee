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

// The full transducer: encoder stack feeding the segment decoder.

#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>

#include "npmt/layers.hpp"
#include "npmt/swan.hpp"

namespace npmt {

struct ModelConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t embed_dim = 32;
  bool use_reordering = true;
  std::size_t window = 7;  // odd; tau = window / 2
  std::size_t enc_hidden = 64;
  std::size_t enc_layers = 1;
  std::size_t dec_embed_dim = 32;
  std::size_t dec_hidden = 64;
  std::size_t dec_layers = 1;
  std::size_t max_segment_len = 6;
  double dropout = 0.5;
  TokenId eos = 2;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

template <typename Real>
struct Model {
  ModelConfig cfg;
  EncoderStack<Real> enc;
  SegmentDecoderParams<Real> dec;

  SwanConfig swan() const { return {cfg.max_segment_len, cfg.tgt_vocab, cfg.eos}; }
};

// Zero-filled parameters with the shapes implied by `cfg`.
template <typename Real>
Model<Real> make_model(const ModelConfig& cfg);

// Uniform(-scale, scale) weights, zero biases.
template <typename Real>
void init_model(Model<Real>& m, Rng& rng, double scale = 0.1);

template <typename Real, typename F>
void visit_model(Model<Real>& m, F&& f) {
  visit_encoder(m.enc, "enc.", f);
  visit_segment_decoder(m.dec, "dec.", f);
}

template <typename Real, typename F>
void visit_model(const Model<Real>& m, F&& f) {
  visit_model(const_cast<Model<Real>&>(m),
              [&](const std::string& name, Array<Real>& a) { f(name, std::as_const(a)); });
}

template <typename Real>
std::size_t num_params(const Model<Real>& m);

template <typename To, typename From>
Model<To> cast_model(const Model<From>& m);

// Flat copy of every parameter in visit order, and the inverse.
template <typename Real>
Array<double> pack_params(const Model<Real>& m);
template <typename Real>
void unpack_params(Model<Real>& m, const Array<double>& flat);

// log p(tgt | src) on a tape.  With `grads` non-null, parameters are bound
// as differentiable leaves whose gradients accumulate into `grads`.
template <typename Real>
typename Tape<Real>::Var sentence_loglik_on_tape(Tape<Real>& tape, const Model<Real>& m,
                                                 std::span<const TokenId> src,
                                                 std::span<const TokenId> tgt,
                                                 Model<Real>* grads, bool training, Rng* rng);

// Returns -log p(tgt | src); when `grads` is non-null adds d(-log p)/d(theta).
template <typename Real>
double sentence_nll(const Model<Real>& m, std::span<const TokenId> src,
                    std::span<const TokenId> tgt, Model<Real>* grads = nullptr,
                    bool training = false, Rng* rng = nullptr);

// True when tgt can be segmented into src.size() segments of length <= L.
bool segmentable(std::size_t src_len, std::size_t tgt_len, std::size_t max_len);

}  // namespace npmt
