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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "npmt/train.hpp"

using namespace npmt;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "npmt_test_train" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TrainConfig quiet_config() {
  TrainConfig c;
  c.model = testing_util::tiny_config();
  c.batch_size = 2;
  c.epochs = 2;
  return c;
}

std::vector<SentencePair> tiny_pairs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SentencePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 2 + i % 3;
    auto src = testing_util::random_tokens(len, 5, rng);
    auto tgt = testing_util::random_tokens(len, 4, rng, 2);
    out.push_back({src, tgt});
  }
  return out;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("first Adam step moves by the learning rate") {
  TrainConfig cfg;
  std::vector<double> p{0.5}, g{1.0}, m{0.0}, v{0.0};
  adam_update<double>(p, g, m, v, 1, cfg);
  CHECK(p[0] - 0.5 == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(m[0] == doctest::Approx(0.1));
  CHECK(v[0] == doctest::Approx(0.001));
  CHECK_THROWS_AS(adam_update<double>(p, g, m, v, 0, cfg), Error);

  std::vector<double> q{0.5}, zero{0.0}, m2{0.0}, v2{0.0};
  adam_update<double>(q, zero, m2, v2, 1, cfg);
  CHECK(q[0] == 0.5);
}

TEST_CASE("zero gradients leave a model unchanged") {
  auto m = testing_util::tiny_model<double>(1);
  const auto before = pack_params(m);
  auto grads = make_model<double>(m.cfg);
  auto adam = make_adam(m);
  TrainConfig cfg;
  CHECK(adam_step(m, grads, adam, cfg) == 0.0);
  CHECK(adam.step == 1);
  CHECK(pack_params(m) == before);
}

TEST_CASE("clipping bounds the global norm") {
  auto m = testing_util::tiny_model<double>(2);
  auto grads = testing_util::tiny_model<double>(3, m.cfg, 10.0);
  const double norm = global_norm(grads);
  REQUIRE(norm > 5.0);
  auto adam = make_adam(m);
  TrainConfig cfg;
  auto copy = grads;
  CHECK(adam_step(m, copy, adam, cfg) == doctest::Approx(norm));
  // First moments hold (1 - beta1) * clipped gradient.
  CHECK(global_norm(adam.m) == doctest::Approx(0.1 * 5.0).epsilon(1e-9));
}

TEST_CASE("non-finite gradients are rejected with their location") {
  auto m = testing_util::tiny_model<double>(2);
  const auto before = pack_params(m);
  auto grads = make_model<double>(m.cfg);
  grads.dec.out_b[1] = std::nan("");
  auto adam = make_adam(m);
  try {
    adam_step(m, grads, adam, TrainConfig{});
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
    CHECK(std::string(e.what()).find("dec.out.b") != std::string::npos);
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  CHECK(pack_params(m) == before);
  CHECK(adam.step == 0);
}

TEST_CASE("configuration parsing") {
  const auto kv = parse_key_values("# comment\n lr = 0.01\nwindow=5\n\nepochs=3 # trailing\n");
  CHECK(kv.at("lr") == "0.01");
  CHECK(kv.at("window") == "5");
  const auto cfg = TrainConfig::from_map(kv);
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.model.window == 5);
  CHECK(cfg.epochs == 3);
  CHECK(TrainConfig::from_map(cfg.to_map()).to_map() == cfg.to_map());
  CHECK_THROWS_AS(TrainConfig::from_map({{"learning_rate", "1"}}), Error);
  CHECK_THROWS_AS(TrainConfig::from_map({{"window", "4"}}).validate(), Error);
  CHECK_THROWS_AS(TrainConfig::from_map({{"epochs", "-1"}}), Error);
  CHECK_THROWS_AS(parse_key_values("novalue\n"), Error);

  TrainConfig d;
  CHECK(d.lr == 0.001);
  CHECK(d.beta1 == 0.9);
  CHECK(d.beta2 == 0.999);
  CHECK(d.eps == 1e-8);
  CHECK(d.batch_size == 32);
  CHECK(d.clip_norm == 5.0);
  CHECK(d.model.max_segment_len == 6);
  CHECK(d.model.window == 7);
  CHECK(d.model.dropout == 0.5);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  const auto dir = scratch_dir("ckpt");
  Checkpoint<float> ck;
  ck.cfg = quiet_config();
  ck.model = testing_util::tiny_model<float>(4, ck.cfg.model);
  ck.adam = make_adam(ck.model);
  ck.adam->step = 7;
  ck.adam->m = testing_util::tiny_model<float>(5, ck.cfg.model);
  ck.epoch = 3;
  ck.step = 12;
  ck.dev_loss = 1.25;
  ck.src_vocab = {"a", "b"};
  ck.tgt_vocab = {"x"};
  const auto path = (dir / "m.ckpt").string();
  save_checkpoint(path, ck);
  const auto r = load_checkpoint<float>(path);
  CHECK(r.version == kCheckpointVersion);
  CHECK(pack_params(r.model) == pack_params(ck.model));
  REQUIRE(r.adam.has_value());
  CHECK(r.adam->step == 7);
  CHECK(pack_params(r.adam->m) == pack_params(ck.adam->m));
  CHECK(r.epoch == 3);
  CHECK(r.step == 12);
  CHECK(r.dev_loss == 1.25);
  CHECK(r.src_vocab == ck.src_vocab);
  CHECK(r.tgt_vocab == ck.tgt_vocab);
  CHECK(r.cfg.to_map() == ck.cfg.to_map());

  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto src = testing_util::random_tokens(1 + i % 5, 5, rng);
    const auto tgt = testing_util::random_tokens(i % 4, 4, rng, 2);
    CHECK(sentence_nll(r.model, src, tgt) == sentence_nll(ck.model, src, tgt));
    CHECK(translate_greedy(r.model, src).segments == translate_greedy(ck.model, src).segments);
  }

  // Precision conversion on load.
  const auto d = load_checkpoint<double>(path);
  CHECK(pack_params(d.model) == pack_params(ck.model));
}

TEST_CASE("damaged checkpoints are refused") {
  const auto dir = scratch_dir("bad");
  Checkpoint<double> ck;
  ck.cfg = quiet_config();
  ck.model = testing_util::tiny_model<double>(1, ck.cfg.model);
  const auto path = (dir / "m.ckpt").string();
  save_checkpoint(path, ck);
  std::string bytes;
  {
    std::ifstream is(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), {});
  }
  auto expect_parse = [&](const std::string& content) {
    const auto p = (dir / "x.ckpt").string();
    std::ofstream(p, std::ios::binary) << content;
    try {
      load_checkpoint<double>(p);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kParse);
    }
  };
  expect_parse("JUNK" + bytes.substr(4));
  expect_parse(bytes.substr(0, bytes.size() / 2));
  auto wrong_version = bytes;
  wrong_version[4] = 9;
  expect_parse(wrong_version);
  CHECK_THROWS_AS(load_checkpoint<double>((dir / "missing.ckpt").string()), Error);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto cfg = quiet_config();
  cfg.lr = 0.0;
  cfg.epochs = 1;
  auto m = testing_util::tiny_model<float>(6, cfg.model);
  const auto before = pack_params(m);
  const auto pairs = tiny_pairs(6, 1);
  train_loop(m, pairs, pairs, cfg);
  CHECK(pack_params(m) == before);
}

TEST_CASE("a single pair is overfit") {
  auto cfg = quiet_config();
  cfg.model.embed_dim = 8;
  cfg.model.enc_hidden = 8;
  cfg.model.dec_embed_dim = 8;
  cfg.model.dec_hidden = 16;
  cfg.model.max_segment_len = 3;
  cfg.batch_size = 1;
  cfg.lr = 0.01;
  cfg.epochs = 200;
  auto m = make_model<float>(cfg.model);
  Rng rng(3);
  init_model(m, rng);
  const std::vector<SentencePair> one{{{0, 3, 4, 1, 3, 2}, {1, 3, 0, 3, 1}}};
  const auto res = train_loop(m, one, one, cfg);
  REQUIRE(res.history.size() == 200);
  for (std::size_t e = 1; e < 6; ++e) CHECK(res.history[e].train_nll < res.history[e - 1].train_nll);
  CHECK(sentence_nll(m, one[0].src, one[0].tgt) < 0.1);
  CHECK(res.history.back().dev_exact_match == 1.0);
}

TEST_CASE("training is deterministic and writes its artifacts") {
  auto cfg = quiet_config();
  cfg.model.dropout = 0.3;
  const auto pairs = tiny_pairs(9, 4);
  const auto dev = tiny_pairs(3, 5);
  const auto dir = scratch_dir("run");
  auto a = testing_util::tiny_model<float>(7, cfg.model);
  auto b = a;
  std::ostringstream log;
  TrainHooks hooks;
  hooks.out_dir = dir.string();
  hooks.metrics = &log;
  std::size_t calls = 0;
  hooks.on_epoch = [&](const EpochMetrics&) { ++calls; };
  const auto ra = train_loop(a, pairs, dev, cfg, hooks);
  const auto rb = train_loop(b, pairs, dev, cfg);
  CHECK(ra.history[0].train_nll == rb.history[0].train_nll);
  CHECK(pack_params(a) == pack_params(b));
  CHECK(calls == 2);
  CHECK(fs::exists(dir / "last.ckpt"));
  CHECK(fs::exists(dir / "best.ckpt"));
  CHECK(fs::exists(dir / "metrics.jsonl"));
  CHECK(log.str().find("\"split\":\"dev\"") != std::string::npos);
  const auto last = load_checkpoint<float>((dir / "last.ckpt").string());
  CHECK(last.adam.has_value());
  CHECK(pack_params(last.model) == pack_params(a));
  const auto best = load_checkpoint<float>((dir / "best.ckpt").string());
  CHECK(pack_params(best.model) == pack_params(ra.best));

  CHECK_THROWS_AS(train_loop(a, {}, dev, cfg), Error);
}

TEST_CASE("unsegmentable pairs are skipped") {
  auto cfg = quiet_config();
  cfg.epochs = 1;
  auto m = testing_util::tiny_model<float>(1, cfg.model);
  auto pairs = tiny_pairs(4, 2);
  pairs.push_back({{0}, {0, 1, 0, 1}});  // four tokens cannot fit one segment of length 3
  const auto res = train_loop(m, pairs, pairs, cfg);
  CHECK(res.skipped_pairs == 1);
}

TEST_CASE("boundary F1") {
  std::vector<SegmentedOutput> pred{SegmentedOutput{{{5, 6}, {}, {7}}}};
  CHECK(boundary_f1(pred, {{2, 0, 1}}) == 1.0);
  // Predicted ends {1, 3}, planted {2, 3}.
  std::vector<SegmentedOutput> off{SegmentedOutput{{{5}, {6, 7}, {}}}};
  CHECK(boundary_f1(off, {{2, 0, 1}}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(boundary_f1(pred, {}), Error);
}

TEST_CASE("toy construction examples") {
  ToyTable t;
  t.phrases = {{"s1", {"u", "v"}}, {"s2", {"w"}}};
  const std::vector<std::string> src{"s1", "s2"};
  CHECK(toy_target(t, src, ToyKind::kPhraseCopy) == std::vector<std::string>{"u", "v", "w"});
  t.triggers = {"s1"};
  CHECK(toy_target(t, src, ToyKind::kLocalSwap) == std::vector<std::string>{"w", "u", "v"});
  CHECK(toy_order(t, src, ToyKind::kLocalSwap) == std::vector<std::size_t>{1, 0});
  // A swapped pair is not touched again, and trigger pairs stay put.
  t.triggers = {"s1", "s2"};
  CHECK(toy_order(t, {"s1", "s2", "s1"}, ToyKind::kLocalSwap) == std::vector<std::size_t>{0, 1, 2});
  t.triggers = {"s1"};
  CHECK(toy_order(t, {"s1", "s2", "s1", "s2"}, ToyKind::kLocalSwap) == std::vector<std::size_t>{1, 0, 3, 2});
}

TEST_CASE("toy corpora") {
  ToyTaskSpec spec;
  spec.kind = ToyKind::kLocalSwap;
  spec.n_train = 300;
  spec.n_dev = 50;
  spec.n_test = 50;
  const auto c = gen_toy(spec);
  std::set<std::vector<std::string>> train_src;
  for (const auto& line : c.splits.at(Split::kTrain).src) train_src.insert(split_ws(line));
  CHECK(train_src.size() == 300);
  for (auto s : {Split::kDev, Split::kTest}) {
    const auto& sp = c.splits.at(s);
    CHECK(sp.src.size() == 50);
    for (const auto& line : sp.src) CHECK(train_src.count(split_ws(line)) == 0);
  }
  const auto& tr = c.splits.at(Split::kTrain);
  for (std::size_t i = 0; i < tr.src.size(); ++i) {
    const auto words = split_ws(tr.src[i]);
    CHECK(words.size() >= spec.min_len);
    CHECK(words.size() <= spec.max_len);
    CHECK(split_ws(tr.tgt[i]) == toy_target(c.table, words, spec.kind));
    std::size_t total = 0;
    for (auto k : tr.segments[i]) {
      CHECK(k >= spec.min_phrase);
      CHECK(k <= spec.max_phrase);
      total += k;
    }
    CHECK(total == split_ws(tr.tgt[i]).size());
  }
  const auto again = gen_toy(spec);
  CHECK(again.splits.at(Split::kTest).tgt == c.splits.at(Split::kTest).tgt);
  CHECK(c.mean_phrase_len(Split::kTrain) > 1.0);

  const auto enc = encode_toy(c);
  CHECK(enc.corpus.at(Split::kTrain).size() == 300);
  CHECK(enc.src_vocab.size() == kNumReserved + spec.src_vocab);

  const auto dir = scratch_dir("toy");
  write_toy(c, dir.string());
  for (const char* f : {"train.src", "train.tgt", "train.seg", "dev.src", "test.tgt", "phrase_table.tsv"})
    CHECK(fs::exists(dir / f));
  CHECK(read_lines((dir / "dev.src").string()) == c.splits.at(Split::kDev).src);
}

}  // TEST_SUITE
