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

#include "npmt/model.hpp"

#include <charconv>

namespace npmt {

void ModelConfig::validate() const {
  if (src_vocab == 0 || tgt_vocab == 0) throw Error(ErrorCode::kConfig, "vocab sizes must be > 0");
  if (window % 2 == 0) throw Error(ErrorCode::kConfig, "reordering window must be odd");
  if (max_segment_len == 0) throw Error(ErrorCode::kConfig, "max_segment_len must be >= 1");
  if (embed_dim == 0 || dec_embed_dim == 0 || dec_hidden == 0)
    throw Error(ErrorCode::kConfig, "layer widths must be > 0");
  if (enc_layers > 0 && enc_hidden == 0) throw Error(ErrorCode::kConfig, "enc_hidden must be > 0");
  if (dec_layers == 0) throw Error(ErrorCode::kConfig, "dec_layers must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::kConfig, "dropout must be in [0,1)");
  if (eos < 0 || static_cast<std::size_t>(eos) >= tgt_vocab)
    throw Error(ErrorCode::kConfig, "eos id outside target vocabulary");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"src_vocab", std::to_string(src_vocab)},
      {"tgt_vocab", std::to_string(tgt_vocab)},
      {"embed_dim", std::to_string(embed_dim)},
      {"use_reordering", use_reordering ? "1" : "0"},
      {"window", std::to_string(window)},
      {"enc_hidden", std::to_string(enc_hidden)},
      {"enc_layers", std::to_string(enc_layers)},
      {"dec_embed_dim", std::to_string(dec_embed_dim)},
      {"dec_hidden", std::to_string(dec_hidden)},
      {"dec_layers", std::to_string(dec_layers)},
      {"max_segment_len", std::to_string(max_segment_len)},
      {"dropout", std::to_string(dropout)},
      {"eos", std::to_string(eos)},
  };
}

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw Error(ErrorCode::kConfig, "config: " + key + "=" + v + " is not an unsigned integer");
  return out;
}

}  // namespace

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto get = [&](const char* k, auto& field) {
    auto it = kv.find(k);
    if (it == kv.end()) return;
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, bool>) {
      field = it->second == "1" || it->second == "true";
    } else if constexpr (std::is_same_v<T, double>) {
      try {
        field = std::stod(it->second);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kConfig, std::string("config: bad number for ") + k);
      }
    } else {
      field = static_cast<T>(to_size(k, it->second));
    }
  };
  get("src_vocab", c.src_vocab);
  get("tgt_vocab", c.tgt_vocab);
  get("embed_dim", c.embed_dim);
  get("use_reordering", c.use_reordering);
  get("window", c.window);
  get("enc_hidden", c.enc_hidden);
  get("enc_layers", c.enc_layers);
  get("dec_embed_dim", c.dec_embed_dim);
  get("dec_hidden", c.dec_hidden);
  get("dec_layers", c.dec_layers);
  get("max_segment_len", c.max_segment_len);
  get("dropout", c.dropout);
  get("eos", c.eos);
  return c;
}

template <typename Real>
Model<Real> make_model(const ModelConfig& cfg) {
  cfg.validate();
  Model<Real> m;
  m.cfg = cfg;
  m.enc = make_encoder<Real>(cfg.src_vocab, cfg.embed_dim, cfg.use_reordering, cfg.window / 2,
                             cfg.enc_hidden, cfg.enc_layers, cfg.dropout);
  m.dec = make_segment_decoder<Real>(m.enc.output_dim(), cfg.tgt_vocab, cfg.dec_embed_dim,
                                     cfg.dec_hidden, cfg.dec_layers);
  return m;
}

template <typename Real>
void init_model(Model<Real>& m, Rng& rng, double scale) {
  init_encoder(m.enc, rng, scale);
  init_segment_decoder(m.dec, rng, scale);
}

template <typename Real>
std::size_t num_params(const Model<Real>& m) {
  std::size_t n = 0;
  visit_model(m, [&](const std::string&, const Array<Real>& a) { n += a.size(); });
  return n;
}

template <typename To, typename From>
Model<To> cast_model(const Model<From>& m) {
  Model<To> out = make_model<To>(m.cfg);
  std::vector<const Array<From>*> src;
  visit_model(m, [&](const std::string&, const Array<From>& a) { src.push_back(&a); });
  std::size_t i = 0;
  visit_model(out, [&](const std::string&, Array<To>& a) { a = src[i++]->template cast<To>(); });
  return out;
}

template <typename Real>
Array<double> pack_params(const Model<Real>& m) {
  Array<double> flat(Shape{num_params(m)});
  std::size_t at = 0;
  visit_model(m, [&](const std::string&, const Array<Real>& a) {
    for (Real v : a.values()) flat[at++] = static_cast<double>(v);
  });
  return flat;
}

template <typename Real>
void unpack_params(Model<Real>& m, const Array<double>& flat) {
  if (flat.size() != num_params(m))
    throw Error(ErrorCode::kDimension, "unpack_params: size mismatch");
  std::size_t at = 0;
  visit_model(m, [&](const std::string&, Array<Real>& a) {
    for (auto& v : a.values()) v = static_cast<Real>(flat[at++]);
  });
}

bool segmentable(std::size_t src_len, std::size_t tgt_len, std::size_t max_len) {
  return src_len > 0 && tgt_len <= src_len * max_len;
}

template <typename Real>
typename Tape<Real>::Var sentence_loglik_on_tape(Tape<Real>& tape, const Model<Real>& m,
                                                 std::span<const TokenId> src,
                                                 std::span<const TokenId> tgt,
                                                 Model<Real>* grads, bool training, Rng* rng) {
  auto encoded = encode_on_tape(tape, src, m.enc, grads ? &grads->enc : nullptr, training, rng);
  const auto swan = m.swan();
  auto lattice = build_lattice_on_tape(tape, encoded.x, tgt, swan, m.dec,
                                       grads ? &grads->dec : nullptr);
  return swan_loglik_on_tape(tape, lattice, src.size(), tgt.size(), swan.max_segment_len);
}

template <typename Real>
double sentence_nll(const Model<Real>& m, std::span<const TokenId> src,
                    std::span<const TokenId> tgt, Model<Real>* grads, bool training, Rng* rng) {
  Tape<Real> tape;
  auto ll = sentence_loglik_on_tape(tape, m, src, tgt, grads, training, rng);
  const double value = static_cast<double>(tape.value(ll)[0]);
  if (grads) tape.backward(ll, Real(-1));
  return -value;
}

#define NPMT_INSTANTIATE(Real)                                                                  \
  template Model<Real> make_model<Real>(const ModelConfig&);                                    \
  template void init_model<Real>(Model<Real>&, Rng&, double);                                   \
  template std::size_t num_params<Real>(const Model<Real>&);                                    \
  template Array<double> pack_params<Real>(const Model<Real>&);                                 \
  template void unpack_params<Real>(Model<Real>&, const Array<double>&);                        \
  template Tape<Real>::Var sentence_loglik_on_tape<Real>(Tape<Real>&, const Model<Real>&,       \
                                                         std::span<const TokenId>,              \
                                                         std::span<const TokenId>, Model<Real>*, \
                                                         bool, Rng*);                           \
  template double sentence_nll<Real>(const Model<Real>&, std::span<const TokenId>,              \
                                     std::span<const TokenId>, Model<Real>*, bool, Rng*);

NPMT_INSTANTIATE(float)
NPMT_INSTANTIATE(double)
#undef NPMT_INSTANTIATE

template Model<float> cast_model<float, double>(const Model<double>&);
template Model<double> cast_model<double, float>(const Model<float>&);
template Model<float> cast_model<float, float>(const Model<float>&);
template Model<double> cast_model<double, double>(const Model<double>&);

}  // namespace npmt
