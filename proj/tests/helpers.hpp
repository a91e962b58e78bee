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

// Shared fixtures for the unit tests.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "npmt/lm.hpp"
#include "npmt/model.hpp"
#include "oracles.hpp"

namespace testing_util {

using npmt::Array;
using npmt::Shape;
using npmt::Tape;

inline Array<double> random_array(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Array<double> a(shape);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : a.values()) v = u(rng);
  return a;
}

using Builder = std::function<Tape<double>::Var(Tape<double>&, const std::vector<Tape<double>::Var>&)>;

// Runs `build` on the given inputs, reduces the output with fixed random
// weights and compares tape gradients of every input with central
// differences.  Returns the worst relative error.
inline double check_op(const Builder& build, std::vector<Array<double>> inputs, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  Array<double> weights;
  auto eval = [&](const std::vector<Array<double>>& xs, std::vector<Array<double>>* grads) {
    Tape<double> tape;
    std::vector<Tape<double>::Var> vars;
    for (std::size_t i = 0; i < xs.size(); ++i)
      vars.push_back(tape.param(xs[i], grads ? &(*grads)[i] : nullptr));
    auto out = build(tape, vars);
    if (weights.empty()) weights = random_array(tape.value(out).shape(), rng);
    auto loss = tape.sum(tape.mul(out, tape.constant(weights)));
    if (grads) tape.backward(loss);
    return tape.value(loss)[0];
  };
  std::vector<Array<double>> grads;
  for (const auto& x : inputs) grads.emplace_back(x.shape());
  eval(inputs, &grads);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    oracle::Vec theta(inputs[i].values().begin(), inputs[i].values().end());
    const auto numeric = oracle::numeric_grad(
        [&](const oracle::Vec& th) {
          auto xs = inputs;
          std::copy(th.begin(), th.end(), xs[i].values().begin());
          return eval(xs, nullptr);
        },
        theta, 1e-6);
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      const double a = grads[i][k];
      const double denom = std::max({1.0, std::abs(a), std::abs(numeric[k])});
      worst = std::max(worst, std::abs(a - numeric[k]) / denom);
    }
  }
  return worst;
}

inline npmt::ModelConfig tiny_config(std::size_t src_vocab = 5, std::size_t tgt_vocab = 4) {
  npmt::ModelConfig c;
  c.src_vocab = src_vocab;
  c.tgt_vocab = tgt_vocab;
  c.embed_dim = 3;
  c.use_reordering = true;
  c.window = 3;
  c.enc_hidden = 3;
  c.enc_layers = 1;
  c.dec_embed_dim = 3;
  c.dec_hidden = 4;
  c.dec_layers = 1;
  c.max_segment_len = 3;
  c.dropout = 0.0;
  c.eos = 2;
  return c;
}

template <typename Real = double>
npmt::Model<Real> tiny_model(std::uint64_t seed, const npmt::ModelConfig& cfg = tiny_config(),
                             double scale = 0.5) {
  auto m = npmt::make_model<Real>(cfg);
  npmt::Rng rng(seed);
  npmt::init_model(m, rng, scale);
  // Give biases non-zero values too so their gradients are exercised.
  npmt::visit_model(m, [&](const std::string&, Array<Real>& a) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (auto& v : a.values())
      if (v == Real(0)) v = static_cast<Real>(u(rng));
  });
  return m;
}

inline std::vector<npmt::TokenId> random_tokens(std::size_t n, std::size_t vocab,
                                                std::mt19937_64& rng, npmt::TokenId avoid = -1) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(vocab) - 1);
  std::vector<npmt::TokenId> out;
  while (out.size() < n) {
    const auto t = d(rng);
    if (t != avoid) out.push_back(t);
  }
  return out;
}

// Lattice with entries ln U(0.01, 1), T' x T x L.
inline npmt::SegmentLattice<double> random_lattice(std::size_t Tp, std::size_t T, std::size_t L,
                                                   std::mt19937_64& rng) {
  npmt::SegmentLattice<double> lat(Tp, T, L);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (auto& v : lat.values()) v = std::log(u(rng));
  return lat;
}

// Every sequence over `alphabet` with length in [0, max_len].
inline std::vector<std::vector<npmt::TokenId>> all_sequences(const std::vector<npmt::TokenId>& alphabet,
                                                             std::size_t max_len) {
  std::vector<std::vector<npmt::TokenId>> out{{}};
  std::size_t begin = 0;
  for (std::size_t len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t i = begin; i < end; ++i)
      for (auto a : alphabet) {
        auto s = out[i];
        s.push_back(a);
        out.push_back(std::move(s));
      }
    begin = end;
  }
  return out;
}

struct MassAccount {
  double total = 0.0;    // sum over outputs of exp(loglik)
  double product = 1.0;  // prod over positions of Z_t
};

// Sums p(y|x) over every output the model can produce and compares with the
// per-position mass of segments no longer than L.
inline MassAccount mass_account(const Array<double>& x, const npmt::SegmentDecoderParams<double>& p,
                                const npmt::SwanConfig& cfg) {
  std::vector<npmt::TokenId> alphabet;
  for (std::size_t v = 0; v < cfg.vocab_size; ++v)
    if (static_cast<npmt::TokenId>(v) != cfg.eos) alphabet.push_back(static_cast<npmt::TokenId>(v));
  MassAccount m;
  const auto X = oracle::to_mat(x);
  for (std::size_t t = 0; t < X.size(); ++t) {
    double z = 0.0;
    for (const auto& seg : all_sequences(alphabet, cfg.max_segment_len))
      z += std::exp(oracle::segment_logp(X[t], seg, p, cfg.eos));
    m.product *= z;
  }
  for (const auto& y : all_sequences(alphabet, X.size() * cfg.max_segment_len)) {
    const auto lat = npmt::build_segment_lattice<double>(x, y, cfg, p);
    m.total += std::exp(npmt::swan_loglik(lat));
  }
  return m;
}

// Worst relative error between tape gradients of -log p(tgt|src) and
// central differences over every parameter of `m`.
inline double model_grad_error(const npmt::Model<double>& m, const std::vector<npmt::TokenId>& src,
                               const std::vector<npmt::TokenId>& tgt) {
  auto work = m;
  npmt::GradFn f = [&](const Array<double>& theta, Array<double>* grad) {
    npmt::unpack_params(work, theta);
    if (!grad) return npmt::sentence_nll(work, src, tgt);
    auto g = npmt::make_model<double>(work.cfg);
    const double v = npmt::sentence_nll(work, src, tgt, &g);
    *grad = npmt::pack_params(g);
    return v;
  };
  return npmt::grad_check(f, npmt::pack_params(m));
}

// Largest |sum_w p(w | ctx) - 1| over the empty context and every context
// stored with a back-off weight.
inline double lm_normalization_error(const npmt::ArpaModel& m) {
  std::vector<std::vector<npmt::LmWord>> contexts{{}};
  for (int n = 1; n < m.order(); ++n)
    for (const auto& [g, e] : m.table(n))
      if (e.has_bow) contexts.push_back(g);
  double worst = 0.0;
  for (const auto& ctx : contexts) {
    double s = 0.0;
    for (npmt::LmWord w = 0; w < static_cast<npmt::LmWord>(m.vocab_size()); ++w)
      if (w != m.bos()) s += std::pow(10.0, m.log10_cond(ctx, w));
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

inline std::vector<std::vector<std::string>> random_sentences(std::size_t n, const std::vector<std::string>& words,
                                                              std::size_t max_len, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> len(0, max_len), pick(0, words.size() - 1);
  std::vector<std::vector<std::string>> out(n);
  for (auto& s : out) {
    const std::size_t k = len(rng);
    for (std::size_t i = 0; i < k; ++i) s.push_back(words[pick(rng)]);
  }
  return out;
}

}  // namespace testing_util
