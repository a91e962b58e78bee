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

// Exercises the shared library through its C header only.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "npmt/npmt.h"

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "npmt_test_capi";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string take(char* s) {
  std::string out = s ? s : "";
  npmt_free_string(s);
  return out;
}

// Small phrase-copy corpus plus a tiny model trained on it.
const fs::path& trained_dir() {
  static const fs::path dir = [] {
    const auto d = work_dir();
    npmt_toy_spec spec;
    npmt_toy_spec_init(&spec);
    spec.n_train = 60;
    spec.n_dev = 10;
    spec.n_test = 10;
    REQUIRE(npmt_gen_toy(&spec, (d / "toy").string().c_str()) == NPMT_OK);
    write_file(d / "tiny.cfg",
               "epochs=2\nbatch_size=8\nembed_dim=4\nenc_hidden=4\ndec_embed_dim=4\n"
               "dec_hidden=6\nwindow=3\ndropout=0\nmax_segment_len=3\nlr=0.01\n");
    std::vector<std::string> lines;
    auto log = [](const char* line, void* user) {
      static_cast<std::vector<std::string>*>(user)->push_back(line);
    };
    const auto t = d / "toy";
    REQUIRE(npmt_train((t / "train.src").string().c_str(), (t / "train.tgt").string().c_str(),
                       (t / "dev.src").string().c_str(), (t / "dev.tgt").string().c_str(),
                       (d / "tiny.cfg").string().c_str(), (d / "run").string().c_str(), 3, log,
                       &lines) == NPMT_OK);
    CHECK(lines.size() == 2);
    CHECK(lines[0].find("\"epoch\":1") != std::string::npos);
    return d / "run";
  }();
  return dir;
}

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::string(npmt_status_name(NPMT_OK)) == "ok");
  CHECK(std::string(npmt_status_name(NPMT_ERR_PARSE)) == "parse");
  CHECK(std::string(npmt_version()).size() > 0);
  npmt_model* m = nullptr;
  CHECK(npmt_model_load("/nonexistent/x.ckpt", &m) == NPMT_ERR_IO);
  CHECK(m == nullptr);
  CHECK(std::string(npmt_last_error()).find("/nonexistent/x.ckpt") != std::string::npos);
  CHECK(npmt_model_load(nullptr, &m) == NPMT_ERR_INVALID_ARGUMENT);
  npmt_model_free(nullptr);
  npmt_lm_free(nullptr);
  npmt_free_string(nullptr);

  const auto bad = work_dir() / "bad.ckpt";
  write_file(bad, "not a checkpoint");
  CHECK(npmt_model_load(bad.string().c_str(), &m) == NPMT_ERR_PARSE);

  npmt_toy_spec spec;
  npmt_toy_spec_init(&spec);
  spec.kind = 7;
  CHECK(npmt_gen_toy(&spec, work_dir().string().c_str()) == NPMT_ERR_CONFIG);
}

TEST_CASE("train, load, decode and analyse") {
  const auto run = trained_dir();
  CHECK(fs::exists(run / "best.ckpt"));
  CHECK(fs::exists(run / "metrics.jsonl"));
  npmt_model* m = nullptr;
  REQUIRE(npmt_model_load((run / "best.ckpt").string().c_str(), &m) == NPMT_OK);
  char* info = nullptr;
  REQUIRE(npmt_model_info(m, &info) == NPMT_OK);
  CHECK(take(info).find("num_params") != std::string::npos);

  npmt_decode_options opts;
  npmt_decode_options_init(&opts);
  CHECK(opts.beam == 1);
  char* out = nullptr;
  char* trace = nullptr;
  REQUIRE(npmt_decode(m, "s1 s2 s3", &opts, nullptr, &out, &trace) == NPMT_OK);
  const std::string greedy = take(out);
  const std::string tr = take(trace);
  CHECK(tr.rfind("0\ts1\t", 0) == 0);

  REQUIRE(npmt_decode(m, "s1 s2 s3", &opts, nullptr, &out, nullptr) == NPMT_OK);
  CHECK(take(out) == greedy);
  REQUIRE(npmt_decode(m, "", &opts, nullptr, &out, nullptr) == NPMT_OK);
  CHECK(take(out).empty());

  opts.beam = 3;
  opts.lambda1 = 1.2;
  REQUIRE(npmt_decode(m, "s1 s2 s3", &opts, nullptr, &out, nullptr) == NPMT_OK);
  take(out);
  opts.lambda2 = 0.2;
  CHECK(npmt_decode(m, "s1 s2 s3", &opts, nullptr, &out, nullptr) == NPMT_ERR_CONFIG);

  const auto trace_path = work_dir() / "trace.tsv";
  write_file(trace_path, tr);
  char* tsv = nullptr;
  REQUIRE(npmt_phrases(trace_path.string().c_str(), 5, 0, &tsv) == NPMT_OK);
  CHECK(take(tsv).size() > 0);

  REQUIRE(npmt_gates(m, "s1 s2 s3", &tsv) == NPMT_OK);
  const std::string gates = take(tsv);
  CHECK(gates.rfind("position\tsource\tsegment\tg-1\tg0\tg+1", 0) == 0);
  CHECK(npmt_gates(m, "", &tsv) == NPMT_ERR_EMPTY_INPUT);
  npmt_model_free(m);
}

TEST_CASE("language model and BLEU") {
  const auto d = work_dir();
  write_file(d / "lm.txt", "a b c\na b\nb c a\n");
  REQUIRE(npmt_lm_train((d / "lm.txt").string().c_str(), 3, 0.75, (d / "lm.arpa").string().c_str()) == NPMT_OK);
  npmt_lm* lm = nullptr;
  REQUIRE(npmt_lm_load((d / "lm.arpa").string().c_str(), &lm) == NPMT_OK);
  double lp = 0.0;
  REQUIRE(npmt_lm_score(lm, "a b", &lp) == NPMT_OK);
  CHECK(lp < 0.0);
  double lp2 = 0.0;
  REQUIRE(npmt_lm_score(lm, "a b", &lp2) == NPMT_OK);
  CHECK(lp == lp2);
  npmt_lm_free(lm);
  CHECK(npmt_lm_train((d / "lm.txt").string().c_str(), 9, 0.75, (d / "x.arpa").string().c_str()) == NPMT_ERR_CONFIG);
  write_file(d / "broken.arpa", "\\data\\\nngram 1=3\n\\1-grams:\n-1\ta\n\\end\\\n");
  CHECK(npmt_lm_load((d / "broken.arpa").string().c_str(), &lm) == NPMT_ERR_PARSE);
  CHECK(std::string(npmt_last_error()).find("line") != std::string::npos);

  write_file(d / "cand.txt", "a b c d\n");
  write_file(d / "ref.txt", "a b c d e\n");
  double score = 0.0;
  REQUIRE(npmt_bleu((d / "cand.txt").string().c_str(), (d / "ref.txt").string().c_str(), 0, &score) == NPMT_OK);
  CHECK(std::abs(score - 77.88) < 0.01);
  write_file(d / "ref2.txt", "a\nb\n");
  CHECK(npmt_bleu((d / "cand.txt").string().c_str(), (d / "ref2.txt").string().c_str(), 0, &score) ==
        NPMT_ERR_DIMENSION);
}

TEST_CASE("window sweep report") {
  const auto d = work_dir();
  write_file(d / "sweep.cfg", "epochs=1\nbatch_size=8\nembed_dim=4\nenc_hidden=4\ndec_embed_dim=4\ndec_hidden=4\n"
                              "dropout=0\nmax_segment_len=3\n");
  npmt_toy_spec spec;
  npmt_toy_spec_init(&spec);
  spec.kind = 1;
  spec.n_train = 30;
  spec.n_dev = 5;
  spec.n_test = 5;
  const size_t sizes[] = {1, 3};
  char* tsv = nullptr;
  REQUIRE(npmt_sweep_windows(&spec, sizes, 2, (d / "sweep.cfg").string().c_str(), &tsv) == NPMT_OK);
  const std::string report = take(tsv);
  CHECK(report.find("window") != std::string::npos);
  const size_t even[] = {2};
  CHECK(npmt_sweep_windows(&spec, even, 1, nullptr, &tsv) == NPMT_ERR_CONFIG);
}
