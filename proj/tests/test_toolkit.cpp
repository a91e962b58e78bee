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
#include <sstream>

#include "helpers.hpp"
#include "npmt/toolkit.hpp"

using namespace npmt;

namespace {

using Words = std::vector<std::string>;

TraceSentence trace(Words src, std::vector<Words> segs) { return {std::move(src), std::move(segs)}; }

}  // namespace

TEST_SUITE("toolkit") {

TEST_CASE("grouping attaches sleeping positions forward") {
  const auto s = trace({"danke", ",", "aber", "das", "beste", "kommt", "noch", "."},
                       {{"thank", "you"}, {","}, {"but"}, {}, {"the", "best", "thing"}, {"is", "still", "coming"}, {}, {"."}});
  const auto groups = group_positions(s);
  REQUIRE(groups.size() == 6);
  CHECK(groups[3] == std::vector<std::size_t>{3, 4});
  CHECK(groups[5] == std::vector<std::size_t>{6, 7});
  std::size_t total = 0;
  for (const auto& g : groups) total += g.size();
  CHECK(total == s.source.size());

  const auto t = extract_phrase_map({s});
  bool found = false;
  for (const auto& m : t.mappings)
    if (m.group == Words{"das", "beste"}) {
      found = true;
      CHECK(m.segment == Words{"the", "best", "thing"});
      CHECK(m.bucket == PhraseBucket::kManyToMany);
    }
  CHECK(found);
  CHECK(t.total == 6);
  std::size_t sum = 0;
  for (const auto& [b, c] : t.bucket_counts) sum += c;
  CHECK(sum == t.total);
  CHECK(std::string(bucket_name(PhraseBucket::kManyToMany)) == "Many->Many");
}

TEST_CASE("trailing and all-empty sentences") {
  const auto trailing = trace({"a", "b", "c"}, {{"x"}, {}, {}});
  const auto g = group_positions(trailing);
  REQUIRE(g.size() == 1);
  CHECK(g[0] == std::vector<std::size_t>{0, 1, 2});
  CHECK(group_positions(trace({"a", "b"}, {{}, {}})).empty());

  const auto t = extract_phrase_map({trace({"a", "b"}, {{}, {}}), trace({"gibt", "es"}, {{}, {"there", "'s"}}),
                                     trace({"gibt", "es"}, {{}, {"there", "'s"}}), trace({"a"}, {{"x"}})});
  CHECK(t.skipped_sentences == 1);
  REQUIRE(!t.mappings.empty());
  CHECK(t.mappings[0].group == Words{"gibt", "es"});
  CHECK(t.mappings[0].count == 2);
  CHECK(t.mappings[0].bucket == PhraseBucket::kManyToMany);
  CHECK(t.top(PhraseBucket::kOneToOne, 10).size() == 1);
}

TEST_CASE("without sleeping positions every mapping starts from one word") {
  const auto t = extract_phrase_map({trace({"a", "b", "c"}, {{"x"}, {"y", "z"}, {"<unk>"}})});
  for (const auto& m : t.mappings)
    CHECK((m.bucket == PhraseBucket::kOneToOne || m.bucket == PhraseBucket::kOneToMany));
  CHECK(t.top(PhraseBucket::kOneToOne, 10).size() == 2);
  CHECK(t.top(PhraseBucket::kOneToOne, 10, true).size() == 1);
  CHECK(t.top(PhraseBucket::kOneToOne, 1).size() == 1);
  std::ostringstream os;
  write_phrase_map(os, t);
  CHECK(os.str().find("One->Many") != std::string::npos);
}

TEST_CASE("trace files round trip") {
  const std::vector<TraceSentence> in{trace({"a", "b"}, {{"x", "y"}, {}}), trace({"c"}, {{"z"}})};
  std::ostringstream os;
  for (const auto& s : in) write_trace(os, s);
  CHECK(os.str().find("1\tb\t$") != std::string::npos);
  std::istringstream is(os.str());
  const auto out = read_trace(is);
  REQUIRE(out.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(out[i].source == in[i].source);
    CHECK(out[i].segments == in[i].segments);
  }
  std::istringstream bad("0\ta\tx\n5\tb\ty\n");
  CHECK_THROWS_AS(read_trace(bad), Error);

  const auto v = Vocab::build({"x y"});
  const auto t = make_trace({"a", "b"}, SegmentedOutput{{{v.id("x")}, {}}}, v);
  CHECK(t.segments[0] == Words{"x"});
  CHECK(t.segments[1].empty());
}

TEST_CASE("BLEU") {
  const auto r = bleu({{"a", "b", "c", "d"}}, {{"a", "b", "c", "d", "e"}});
  CHECK(r.score == doctest::Approx(100.0 * std::exp(-0.25)).epsilon(1e-12));
  CHECK(r.score == doctest::Approx(77.88).epsilon(1e-4));
  for (double p : r.precisions) CHECK(p == 1.0);

  const std::vector<Words> corpus{{"the", "cat", "sat", "on", "the", "mat"}, {"hello", "world"}};
  CHECK(bleu(corpus, corpus).score == 100.0);
  CHECK(bleu({{"a", "b", "c", "d"}}, {{"a", "b", "c", "e"}}).score == 0.0);
  CHECK(bleu({{"a", "b", "c", "d"}}, {{"a", "b", "c", "e"}}, 4, true).score > 0.0);
  CHECK(bleu({{"x", "y"}}, {{"a", "b"}}).score == 0.0);
  CHECK(bleu({{}}, {{"a"}}).score == 0.0);
  CHECK(bleu({{}}, {{}}).score == 100.0);
  CHECK_THROWS_AS(bleu({}, {}), Error);
  CHECK_THROWS_AS(bleu({{"a"}}, {{"a"}, {"b"}}), Error);
}

TEST_CASE("gate export") {
  auto cfg = testing_util::tiny_config(6, 5);
  auto m = make_model<double>(cfg);
  const auto sv = Vocab::from_tokens({"p", "q"});
  const auto tv = Vocab::from_tokens({"u"});
  const std::vector<TokenId> src{4, 5, 4, 4};
  const auto g = export_gates(m, std::span<const TokenId>(src), sv, tv);
  CHECK(g.values.rows() == 4);
  CHECK(g.values.cols() == 3);
  for (double v : g.values.values()) CHECK(v == 0.5);
  CHECK(g.source == Words{"p", "q", "p", "p"});
  CHECK(g.row_labels.size() == 4);
  std::ostringstream os;
  write_gates(os, g);
  CHECK(os.str().rfind("position\tsource\tsegment\tg-1\tg0\tg+1", 0) == 0);
  CHECK(os.str().find("0.500000") != std::string::npos);

  const std::vector<TokenId> none;
  CHECK_THROWS_AS(export_gates(m, std::span<const TokenId>(none), sv, tv), Error);
  cfg.use_reordering = false;
  auto plain = make_model<double>(cfg);
  CHECK_THROWS_AS(export_gates(plain, std::span<const TokenId>(src), sv, tv), Error);
}

TEST_CASE("window sweep is deterministic") {
  ToyTaskSpec task;
  task.kind = ToyKind::kLocalSwap;
  task.n_train = 40;
  task.n_dev = 10;
  task.n_test = 10;
  TrainConfig base;
  base.model = testing_util::tiny_config();
  base.model.embed_dim = 4;
  base.epochs = 1;
  base.batch_size = 8;
  const auto a = sweep_windows(task, {1, 3}, base);
  const auto b = sweep_windows(task, {1, 3}, base);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a[i].window == b[i].window);
    CHECK(a[i].dev_exact_match == b[i].dev_exact_match);
    CHECK(a[i].dev_bleu == b[i].dev_bleu);
    CHECK(a[i].test_exact_match == b[i].test_exact_match);
  }
  std::ostringstream os;
  write_sweep(os, a);
  CHECK(os.str().find("window") != std::string::npos);
  CHECK_THROWS_AS(sweep_windows(task, {2}, base), Error);
  CHECK_THROWS_AS(sweep_windows(task, {}, base), Error);
}

}  // TEST_SUITE
