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

#include "npmt/npmt.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include <json.hpp>

#include "npmt/data.hpp"
#include "npmt/decode.hpp"
#include "npmt/lm.hpp"
#include "npmt/toolkit.hpp"
#include "npmt/train.hpp"

struct npmt_model {
  npmt::Checkpoint<float> ckpt;
  npmt::Vocab src;
  npmt::Vocab tgt;
};

struct npmt_lm {
  npmt::ArpaModel model;
};

namespace {

thread_local std::string g_last_error;

npmt_status to_status(npmt::ErrorCode c) {
  using npmt::ErrorCode;
  switch (c) {
    case ErrorCode::kOk: return NPMT_OK;
    case ErrorCode::kDimension: return NPMT_ERR_DIMENSION;
    case ErrorCode::kOutOfVocab: return NPMT_ERR_OUT_OF_VOCAB;
    case ErrorCode::kEmptyInput: return NPMT_ERR_EMPTY_INPUT;
    case ErrorCode::kParse: return NPMT_ERR_PARSE;
    case ErrorCode::kConfig: return NPMT_ERR_CONFIG;
    case ErrorCode::kNumeric: return NPMT_ERR_NUMERIC;
    case ErrorCode::kIo: return NPMT_ERR_IO;
    case ErrorCode::kSize: return NPMT_ERR_SIZE;
    case ErrorCode::kUndefined: return NPMT_ERR_UNDEFINED;
    case ErrorCode::kInvalidArgument: return NPMT_ERR_INVALID_ARGUMENT;
  }
  return NPMT_ERR_INTERNAL;
}

template <typename F>
npmt_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return NPMT_OK;
  } catch (const npmt::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return NPMT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NPMT_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p)
    throw npmt::Error(npmt::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

npmt::ToyTaskSpec to_spec(const npmt_toy_spec* s) {
  npmt::ToyTaskSpec t;
  if (s->kind != 0 && s->kind != 1)
    throw npmt::Error(npmt::ErrorCode::kConfig, "toy kind must be 0 (phrase-copy) or 1 (local-swap)");
  t.kind = s->kind == 0 ? npmt::ToyKind::kPhraseCopy : npmt::ToyKind::kLocalSwap;
  t.src_vocab = s->src_vocab;
  t.tgt_vocab = s->tgt_vocab;
  t.min_phrase = s->min_phrase;
  t.max_phrase = s->max_phrase;
  t.swap_distance = s->swap_distance;
  t.min_len = s->min_len;
  t.max_len = s->max_len;
  t.n_train = s->n_train;
  t.n_dev = s->n_dev;
  t.n_test = s->n_test;
  t.seed = s->seed;
  t.validate();
  return t;
}

}  // namespace

extern "C" {

const char* npmt_version(void) { return "0.1.0"; }

const char* npmt_last_error(void) { return g_last_error.c_str(); }

const char* npmt_status_name(npmt_status s) {
  switch (s) {
    case NPMT_OK: return "ok";
    case NPMT_ERR_DIMENSION: return "dimension";
    case NPMT_ERR_OUT_OF_VOCAB: return "out-of-vocabulary";
    case NPMT_ERR_EMPTY_INPUT: return "empty-input";
    case NPMT_ERR_PARSE: return "parse";
    case NPMT_ERR_CONFIG: return "config";
    case NPMT_ERR_NUMERIC: return "numeric";
    case NPMT_ERR_IO: return "io";
    case NPMT_ERR_SIZE: return "size";
    case NPMT_ERR_UNDEFINED: return "undefined";
    case NPMT_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case NPMT_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void npmt_free_string(char* s) { std::free(s); }

npmt_status npmt_train(const char* src_path, const char* tgt_path, const char* dev_src_path,
                       const char* dev_tgt_path, const char* config_path, const char* out_dir,
                       int64_t seed, npmt_log_fn log, void* user) {
  return guarded([&] {
    require(src_path, "src_path");
    require(tgt_path, "tgt_path");
    require(dev_src_path, "dev_src_path");
    require(dev_tgt_path, "dev_tgt_path");
    require(out_dir, "out_dir");
    npmt::TrainConfig cfg = config_path ? npmt::TrainConfig::load(config_path) : npmt::TrainConfig{};
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    const auto src_vocab = npmt::Vocab::build(npmt::read_lines(src_path));
    const auto tgt_vocab = npmt::Vocab::build(npmt::read_lines(tgt_path));
    const auto train = npmt::load_pairs(src_path, tgt_path, src_vocab, tgt_vocab);
    const auto dev = npmt::load_pairs(dev_src_path, dev_tgt_path, src_vocab, tgt_vocab);
    cfg.model.src_vocab = src_vocab.size();
    cfg.model.tgt_vocab = tgt_vocab.size();
    cfg.model.eos = npmt::kEosSeg;
    cfg.validate();
    auto model = npmt::make_model<float>(cfg.model);
    npmt::Rng rng(cfg.seed);
    npmt::init_model(model, rng);
    npmt::TrainHooks hooks;
    hooks.out_dir = out_dir;
    hooks.src_vocab = src_vocab.tokens();
    hooks.tgt_vocab = tgt_vocab.tokens();
    if (log)
      hooks.on_epoch = [&](const npmt::EpochMetrics& m) {
        nlohmann::json j{{"epoch", m.epoch},          {"train_nll", m.train_nll},
                         {"dev_nll", m.dev_nll},      {"dev_exact_match", m.dev_exact_match},
                         {"lr", m.lr},                {"seconds", m.seconds}};
        if (std::isfinite(m.dev_avg_seg_len)) j["dev_avg_seg_len"] = m.dev_avg_seg_len;
        log(j.dump().c_str(), user);
      };
    const auto res = npmt::train_loop(model, train, dev, cfg, hooks);
    if (log && res.skipped_pairs) {
      const std::string msg = "skipped " + std::to_string(res.skipped_pairs) +
                              " training pairs (too long or not segmentable)";
      log(msg.c_str(), user);
    }
  });
}

npmt_status npmt_model_load(const char* ckpt_path, npmt_model** out) {
  return guarded([&] {
    require(ckpt_path, "ckpt_path");
    require(out, "out");
    auto m = std::make_unique<npmt_model>();
    m->ckpt = npmt::load_checkpoint<float>(ckpt_path);
    m->src = npmt::Vocab::from_tokens(m->ckpt.src_vocab);
    m->tgt = npmt::Vocab::from_tokens(m->ckpt.tgt_vocab);
    if (m->src.size() != m->ckpt.model.cfg.src_vocab || m->tgt.size() != m->ckpt.model.cfg.tgt_vocab)
      throw npmt::Error(npmt::ErrorCode::kParse, "checkpoint: vocabulary sizes disagree with the model");
    *out = m.release();
  });
}

void npmt_model_free(npmt_model* m) { delete m; }

npmt_status npmt_model_info(const npmt_model* m, char** json) {
  return guarded([&] {
    require(m, "model");
    require(json, "json");
    nlohmann::json j;
    for (const auto& [k, v] : m->ckpt.cfg.to_map()) j["config"][k] = v;
    j["epoch"] = m->ckpt.epoch;
    j["step"] = m->ckpt.step;
    j["dev_loss"] = m->ckpt.dev_loss;
    j["num_params"] = npmt::num_params(m->ckpt.model);
    *json = dup_string(j.dump());
  });
}

void npmt_decode_options_init(npmt_decode_options* o) {
  if (!o) return;
  o->beam = 1;
  o->lambda1 = 0.0;
  o->lambda2 = 0.0;
  o->merge = 1;
}

npmt_status npmt_decode(const npmt_model* m, const char* sentence, const npmt_decode_options* opts,
                        const npmt_lm* lm, char** output, char** trace) {
  return guarded([&] {
    require(m, "model");
    require(sentence, "sentence");
    require(output, "output");
    npmt_decode_options o;
    npmt_decode_options_init(&o);
    if (opts) o = *opts;
    const auto words = npmt::split_ws(sentence);
    const auto src = m->src.encode(sentence);
    npmt::SegmentedOutput out;
    if (!src.empty()) {
      if (o.beam <= 1) {
        out = npmt::translate_greedy(m->ckpt.model, std::span<const npmt::TokenId>(src));
      } else {
        std::vector<std::string> tgt_words;
        for (std::size_t i = 0; i < m->tgt.size(); ++i)
          tgt_words.push_back(m->tgt.word(static_cast<npmt::TokenId>(i)));
        npmt::BeamScorer scorer(o.lambda1, o.lambda2, lm ? &lm->model : nullptr, tgt_words);
        out = npmt::translate_beam(m->ckpt.model, std::span<const npmt::TokenId>(src), o.beam,
                                   scorer, o.merge != 0)
                  .output;
      }
    }
    const std::string text = m->tgt.decode(out.tokens());
    std::string trace_text;
    if (trace) {
      std::ostringstream os;
      if (!src.empty()) npmt::write_trace(os, npmt::make_trace(words, out, m->tgt));
      trace_text = os.str();
    }
    char* o_text = dup_string(text);
    if (trace) {
      try {
        *trace = dup_string(trace_text);
      } catch (...) {
        std::free(o_text);
        throw;
      }
    }
    *output = o_text;
  });
}

npmt_status npmt_gates(const npmt_model* m, const char* sentence, char** tsv) {
  return guarded([&] {
    require(m, "model");
    require(sentence, "sentence");
    require(tsv, "tsv");
    const auto src = m->src.encode(sentence);
    const auto g = npmt::export_gates(m->ckpt.model, std::span<const npmt::TokenId>(src), m->src, m->tgt);
    std::ostringstream os;
    npmt::write_gates(os, g);
    *tsv = dup_string(os.str());
  });
}

npmt_status npmt_lm_train(const char* corpus_path, int order, double discount, const char* out_path) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require(out_path, "out_path");
    std::vector<std::vector<std::string>> corpus;
    for (const auto& line : npmt::read_lines(corpus_path)) {
      auto w = npmt::split_ws(line);
      if (!w.empty()) corpus.push_back(std::move(w));
    }
    npmt::write_arpa(npmt::train_ngram(corpus, order, discount), out_path);
  });
}

npmt_status npmt_lm_load(const char* arpa_path, npmt_lm** out) {
  return guarded([&] {
    require(arpa_path, "arpa_path");
    require(out, "out");
    auto lm = std::make_unique<npmt_lm>();
    lm->model = npmt::read_arpa(arpa_path);
    *out = lm.release();
  });
}

void npmt_lm_free(npmt_lm* lm) { delete lm; }

npmt_status npmt_lm_score(const npmt_lm* lm, const char* sentence, double* logprob) {
  return guarded([&] {
    require(lm, "lm");
    require(sentence, "sentence");
    require(logprob, "logprob");
    *logprob = npmt::lm_logprob(lm->model, npmt::split_ws(sentence), true);
  });
}

void npmt_toy_spec_init(npmt_toy_spec* s) {
  if (!s) return;
  const npmt::ToyTaskSpec d;
  s->kind = 0;
  s->src_vocab = d.src_vocab;
  s->tgt_vocab = d.tgt_vocab;
  s->min_phrase = d.min_phrase;
  s->max_phrase = d.max_phrase;
  s->swap_distance = d.swap_distance;
  s->min_len = d.min_len;
  s->max_len = d.max_len;
  s->n_train = d.n_train;
  s->n_dev = d.n_dev;
  s->n_test = d.n_test;
  s->seed = d.seed;
}

npmt_status npmt_gen_toy(const npmt_toy_spec* s, const char* out_dir) {
  return guarded([&] {
    require(s, "spec");
    require(out_dir, "out_dir");
    npmt::write_toy(npmt::gen_toy(to_spec(s)), out_dir);
  });
}

npmt_status npmt_phrases(const char* trace_path, size_t top_n, int drop_unk, char** tsv) {
  return guarded([&] {
    require(trace_path, "trace_path");
    require(tsv, "tsv");
    const auto table = npmt::extract_phrase_map(npmt::read_trace(std::string(trace_path)));
    std::ostringstream os;
    npmt::write_phrase_map(os, table, top_n, drop_unk != 0);
    *tsv = dup_string(os.str());
  });
}

npmt_status npmt_sweep_windows(const npmt_toy_spec* s, const size_t* sizes, size_t n_sizes,
                               const char* config_path, char** tsv) {
  return guarded([&] {
    require(s, "spec");
    require(sizes, "sizes");
    require(tsv, "tsv");
    if (n_sizes == 0) throw npmt::Error(npmt::ErrorCode::kInvalidArgument, "no window sizes given");
    const auto cfg = config_path ? npmt::TrainConfig::load(config_path) : npmt::TrainConfig{};
    const auto rows =
        npmt::sweep_windows(to_spec(s), std::vector<std::size_t>(sizes, sizes + n_sizes), cfg);
    std::ostringstream os;
    npmt::write_sweep(os, rows);
    *tsv = dup_string(os.str());
  });
}

npmt_status npmt_bleu(const char* cand_path, const char* ref_path, int smooth, double* score) {
  return guarded([&] {
    require(cand_path, "cand_path");
    require(ref_path, "ref_path");
    require(score, "score");
    std::vector<std::vector<std::string>> c, r;
    for (const auto& l : npmt::read_lines(cand_path)) c.push_back(npmt::split_ws(l));
    for (const auto& l : npmt::read_lines(ref_path)) r.push_back(npmt::split_ws(l));
    *score = npmt::bleu(c, r, 4, smooth != 0).score;
  });
}

}  // extern "C"
