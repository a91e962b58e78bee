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

// Command-line front end.  Talks to the library only through npmt.h.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "npmt/npmt.h"

namespace {

struct Failure {
  npmt_status status;
};

void check(npmt_status s) {
  if (s != NPMT_OK) throw Failure{s};
}

// Owns a string handed out by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { npmt_free_string(p); }
  std::string str() const { return p ? p : ""; }
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  if (!os) {
    std::cerr << "error: cannot write " << path << "\n";
    throw Failure{NPMT_ERR_IO};
  }
  os << text;
}

struct ToyFlags {
  std::string kind = "phrase-copy";
  npmt_toy_spec spec{};
};

void add_toy_flags(CLI::App* cmd, ToyFlags& f) {
  npmt_toy_spec_init(&f.spec);
  cmd->add_option("--kind", f.kind, "phrase-copy or local-swap")
      ->check(CLI::IsMember({"phrase-copy", "local-swap"}));
  cmd->add_option("--seed", f.spec.seed, "generator seed");
  cmd->add_option("--src-vocab", f.spec.src_vocab, "source vocabulary size");
  cmd->add_option("--tgt-vocab", f.spec.tgt_vocab, "target vocabulary size");
  cmd->add_option("--min-phrase", f.spec.min_phrase, "shortest target phrase");
  cmd->add_option("--max-phrase", f.spec.max_phrase, "longest target phrase");
  cmd->add_option("--swap-distance", f.spec.swap_distance, "local-swap distance");
  cmd->add_option("--min-len", f.spec.min_len, "shortest source sentence");
  cmd->add_option("--max-len", f.spec.max_len, "longest source sentence");
  cmd->add_option("--n-train", f.spec.n_train, "training pairs");
  cmd->add_option("--n-dev", f.spec.n_dev, "dev pairs");
  cmd->add_option("--n-test", f.spec.n_test, "test pairs");
}

void finish_toy(ToyFlags& f) { f.spec.kind = f.kind == "local-swap" ? 1 : 0; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"npmt: phrase-based neural transduction with segment marginals"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(npmt_version()));

  // train
  std::string src, tgt, dev_src, dev_tgt, config, out;
  std::int64_t seed = -1;
  auto* train = app.add_subcommand("train", "train a model; writes checkpoints and metrics");
  train->add_option("--src", src, "training source file")->required();
  train->add_option("--tgt", tgt, "training target file")->required();
  train->add_option("--dev-src", dev_src, "dev source file")->required();
  train->add_option("--dev-tgt", dev_tgt, "dev target file")->required();
  train->add_option("--config", config, "key=value configuration file");
  train->add_option("--out", out, "output directory")->required();
  train->add_option("--seed", seed, "overrides the configured seed");

  // decode
  std::string ckpt, input, lm_path, trace_path, output_path;
  std::size_t beam = 1;
  double lambda1 = 1.2, lambda2 = 0.2;
  bool no_merge = false;
  auto* decode = app.add_subcommand("decode", "translate one sentence per line");
  decode->add_option("--ckpt", ckpt, "checkpoint")->required();
  decode->add_option("--input", input, "source file, one sentence per line")->required();
  decode->add_option("--beam", beam, "beam width; 1 is greedy");
  decode->add_option("--lm", lm_path, "ARPA language model");
  decode->add_option("--lambda1", lambda1, "word bonus (beam only, default 1.2)");
  auto* l2 = decode->add_option("--lambda2", lambda2, "LM weight (default 0.2 with --lm)");
  decode->add_option("--trace", trace_path, "write the segmentation trace here");
  decode->add_option("--output", output_path, "output file (default stdout)");
  decode->add_flag("--no-merge", no_merge, "keep identical outputs apart in the beam");

  // lm-train / lm-score
  std::string corpus, lm_out;
  int order = 4;
  double discount = 0.75;
  auto* lm_train = app.add_subcommand("lm-train", "estimate a back-off n-gram model");
  lm_train->add_option("--corpus", corpus, "one sentence per line")->required();
  lm_train->add_option("--order", order, "n-gram order (1-4)");
  lm_train->add_option("--discount", discount, "absolute discount");
  lm_train->add_option("--out", lm_out, "ARPA output")->required();

  std::string score_input;
  auto* lm_score = app.add_subcommand("lm-score", "natural-log probability per line");
  lm_score->add_option("--lm", lm_path, "ARPA model")->required();
  lm_score->add_option("--input", score_input, "one sentence per line")->required();

  // gen-toy
  ToyFlags toy;
  std::string toy_out;
  auto* gen = app.add_subcommand("gen-toy", "write a synthetic parallel corpus");
  add_toy_flags(gen, toy);
  gen->add_option("--out", toy_out, "output directory")->required();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "phrase tables and gate matrices");
  analyze->require_subcommand(1);
  std::string a_trace, a_out, sentence;
  std::size_t top = 10;
  bool drop_unk = false;
  auto* phrases = analyze->add_subcommand("phrases", "phrase mappings from a decode trace");
  phrases->add_option("--trace", a_trace, "trace file from decode --trace")->required();
  phrases->add_option("--out", a_out, "TSV output (default stdout)");
  phrases->add_option("--top", top, "mappings per bucket");
  phrases->add_flag("--drop-unk", drop_unk, "hide mappings containing <unk>");
  auto* gates = analyze->add_subcommand("gates", "reordering gate matrix for one sentence");
  gates->add_option("--ckpt", ckpt, "checkpoint")->required();
  gates->add_option("--sentence", sentence, "source sentence")->required();
  gates->add_option("--out", a_out, "TSV output (default stdout)");

  // sweep-windows
  ToyFlags sweep_toy;
  std::vector<std::size_t> sizes{1, 3, 5, 7};
  std::string sweep_config, sweep_out;
  auto* sweep = app.add_subcommand("sweep-windows", "train one model per reordering window size");
  sweep->add_option("--sizes", sizes, "comma-separated odd sizes")->delimiter(',');
  add_toy_flags(sweep, sweep_toy);
  sweep->add_option("--config", sweep_config, "training configuration");
  sweep->add_option("--out", sweep_out, "TSV report (default stdout)");

  // bleu
  std::string cand, ref;
  bool smooth = false;
  auto* bleu = app.add_subcommand("bleu", "corpus BLEU");
  bleu->add_option("--cand", cand, "candidate file")->required();
  bleu->add_option("--ref", ref, "reference file")->required();
  bleu->add_flag("--smooth", smooth, "add-one smoothing for n >= 2");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto log = [](const char* line, void*) { std::cerr << line << std::endl; };
      check(npmt_train(src.c_str(), tgt.c_str(), dev_src.c_str(), dev_tgt.c_str(),
                       config.empty() ? nullptr : config.c_str(), out.c_str(), seed, log, nullptr));
    } else if (*decode) {
      npmt_model* model = nullptr;
      check(npmt_model_load(ckpt.c_str(), &model));
      npmt_lm* lm = nullptr;
      if (!lm_path.empty()) {
        const auto s = npmt_lm_load(lm_path.c_str(), &lm);
        if (s != NPMT_OK) {
          npmt_model_free(model);
          check(s);
        }
      }
      npmt_decode_options opts;
      npmt_decode_options_init(&opts);
      opts.beam = beam;
      opts.merge = no_merge ? 0 : 1;
      if (beam > 1) {
        opts.lambda1 = lambda1;
        opts.lambda2 = lm ? lambda2 : (l2->count() ? lambda2 : 0.0);
      }
      std::ifstream in(input);
      std::ostringstream text, traces;
      npmt_status status = in ? NPMT_OK : NPMT_ERR_IO;
      if (!in) std::cerr << "error: cannot open " << input << "\n";
      for (std::string line; status == NPMT_OK && std::getline(in, line);) {
        LibString o, t;
        status = npmt_decode(model, line.c_str(), &opts, lm, &o.p,
                             trace_path.empty() ? nullptr : &t.p);
        if (status == NPMT_OK) {
          text << o.str() << '\n';
          traces << t.str();
        }
      }
      npmt_lm_free(lm);
      npmt_model_free(model);
      check(status);
      write_text(output_path, text.str());
      if (!trace_path.empty()) write_text(trace_path, traces.str());
    } else if (*lm_train) {
      check(npmt_lm_train(corpus.c_str(), order, discount, lm_out.c_str()));
    } else if (*lm_score) {
      npmt_lm* lm = nullptr;
      check(npmt_lm_load(lm_path.c_str(), &lm));
      std::ifstream in(score_input);
      npmt_status status = in ? NPMT_OK : NPMT_ERR_IO;
      if (!in) std::cerr << "error: cannot open " << score_input << "\n";
      double total = 0.0;
      for (std::string line; status == NPMT_OK && std::getline(in, line);) {
        double lp = 0.0;
        status = npmt_lm_score(lm, line.c_str(), &lp);
        if (status == NPMT_OK) {
          std::printf("%.6f\n", lp);
          total += lp;
        }
      }
      npmt_lm_free(lm);
      check(status);
      std::printf("total\t%.6f\n", total);
    } else if (*gen) {
      finish_toy(toy);
      check(npmt_gen_toy(&toy.spec, toy_out.c_str()));
    } else if (*phrases) {
      LibString tsv;
      check(npmt_phrases(a_trace.c_str(), top, drop_unk ? 1 : 0, &tsv.p));
      write_text(a_out, tsv.str());
    } else if (*gates) {
      npmt_model* model = nullptr;
      check(npmt_model_load(ckpt.c_str(), &model));
      LibString tsv;
      const auto s = npmt_gates(model, sentence.c_str(), &tsv.p);
      npmt_model_free(model);
      check(s);
      write_text(a_out, tsv.str());
    } else if (*sweep) {
      finish_toy(sweep_toy);
      LibString tsv;
      check(npmt_sweep_windows(&sweep_toy.spec, sizes.data(), sizes.size(),
                               sweep_config.empty() ? nullptr : sweep_config.c_str(), &tsv.p));
      write_text(sweep_out, tsv.str());
    } else if (*bleu) {
      double score = 0.0;
      check(npmt_bleu(cand.c_str(), ref.c_str(), smooth ? 1 : 0, &score));
      std::printf("BLEU = %.2f\n", score);
    }
  } catch (const Failure& f) {
    const char* msg = npmt_last_error();
    std::cerr << "error (" << npmt_status_name(f.status) << "): " << (msg && *msg ? msg : "failed")
              << "\n";
    return static_cast<int>(f.status);
  }
  return 0;
}
