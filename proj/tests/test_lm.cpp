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
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "npmt/lm.hpp"

using namespace npmt;
using testing_util::lm_normalization_error;

namespace {

const std::vector<std::vector<std::string>> kCorpus{
    {"the", "cat", "sat"},         {"the", "dog", "sat", "down"}, {"a", "cat", "ran"},
    {"the", "cat", "ran", "down"}, {"a", "dog"},                  {"dog", "sat", "the", "end"},
};

std::string arpa_text(const ArpaModel& m) {
  std::ostringstream os;
  write_arpa(m, os);
  return os.str();
}

ErrorCode parse_error(const std::string& text, std::string* msg = nullptr) {
  std::istringstream is(text);
  try {
    read_arpa(is);
  } catch (const Error& e) {
    if (msg) *msg = e.what();
    return e.code();
  }
  return ErrorCode::kOk;
}

}  // namespace

TEST_SUITE("lm") {

TEST_CASE("back-off through a missing bigram") {
  ArpaModel m;
  m.set_order(2);
  const auto a = m.intern("a"), b = m.intern("b");
  m.table(1)[{a}] = NgramEntry{-0.5, -0.3, true};
  m.table(1)[{b}] = NgramEntry{-0.7, 0.0, false};
  m.table(2)[{b, a}] = NgramEntry{-0.2, 0.0, false};
  const std::vector<LmWord> ctx_a{a}, ctx_b{b};
  CHECK(m.log10_cond(ctx_a, b) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(m.log10_cond(ctx_b, a) == -0.2);
  // Context without a stored back-off weight contributes nothing.
  CHECK(m.log10_cond(ctx_b, b) == -0.7);
}

TEST_CASE("unigram estimate matches hand counts") {
  // a:2 b:1 c:1 </s>:2, six tokens over four types, floor spread over five words.
  const auto m = train_ngram({{"a", "b", "a"}, {"c"}}, 1);
  const double floor = 0.75 * 4 / 6 / 5;
  auto p = [&](const std::string& w) { return std::pow(10.0, m.table(1).at({m.id(w)}).log10_prob); };
  CHECK(p("a") == doctest::Approx(1.25 / 6 + floor).epsilon(1e-12));
  CHECK(p("b") == doctest::Approx(0.25 / 6 + floor).epsilon(1e-12));
  CHECK(p("c") == doctest::Approx(0.25 / 6 + floor).epsilon(1e-12));
  CHECK(p("</s>") == doctest::Approx(1.25 / 6 + floor).epsilon(1e-12));
  CHECK(p("<unk>") == doctest::Approx(floor).epsilon(1e-12));
  CHECK(lm_normalization_error(m) < 1e-12);
}

TEST_CASE("single-word corpus") {
  const auto m = train_ngram({{"a", "a", "a"}}, 3);
  CHECK(m.vocab_size() == 4);
  double s = 0;
  for (const char* w : {"a", "</s>", "<unk>"}) s += std::pow(10.0, m.log10_cond({}, m.id(w)));
  CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("every context is normalized") {
  for (int order = 1; order <= 4; ++order) {
    const auto m = train_ngram(kCorpus, order);
    CHECK(m.order() == order);
    CHECK(lm_normalization_error(m) < 1e-9);
    for (int n = 1; n <= order; ++n)
      for (const auto& [g, e] : m.table(n)) {
        CHECK(e.log10_prob <= 0.0);
        if (n == order) CHECK_FALSE(e.has_bow);
        if (n > 1) CHECK(m.find(std::span<const LmWord>(g).first(g.size() - 1)) != nullptr);
      }
  }
  const auto two = train_ngram({{"x", "y"}, {"y", "x", "x"}}, 2, 0.5);
  CHECK(lm_normalization_error(two) < 1e-9);
}

TEST_CASE("sentence scores") {
  const auto m = train_ngram(kCorpus, 3);
  const std::vector<std::string> none;
  CHECK(lm_logprob(m, none) ==
        doctest::Approx(m.log10_cond(std::vector<LmWord>{m.bos()}, m.eos()) * std::log(10.0)).epsilon(1e-14));
  CHECK(lm_logprob(m, none, false) == 0.0);
  // A stored trigram is used directly.
  const auto& tri = m.table(3).at({m.bos(), m.id("the"), m.id("cat")});
  const std::vector<LmWord> ctx{m.bos(), m.id("the")};
  CHECK(m.log10_cond(ctx, m.id("cat")) == tri.log10_prob);
  // Unknown words score as <unk>.
  CHECK(lm_logprob(m, std::vector<std::string>{"zebra"}) == lm_logprob(m, std::vector<std::string>{"<unk>"}));

  std::mt19937_64 rng(3);
  const auto sents = testing_util::random_sentences(100, {"the", "cat", "dog", "sat", "a", "down", "zebra"}, 8, rng);
  for (const auto& s : sents) {
    double prev = 0.0;
    for (std::size_t k = 0; k <= s.size(); ++k) {
      const std::vector<std::string> prefix(s.begin(), s.begin() + static_cast<long>(k));
      const double lp = lm_logprob(m, prefix, false);
      CHECK(lp <= prev);
      prev = lp;
    }
  }
}

TEST_CASE("ARPA round trip") {
  const auto m = train_ngram(kCorpus, 4);
  const std::string text = arpa_text(m);
  std::istringstream is(text);
  const auto r = read_arpa(is);
  CHECK(r.order() == 4);
  for (int n = 1; n <= 4; ++n) CHECK(r.table(n).size() == m.table(n).size());
  // Text is a fixed point after one trip.
  CHECK(arpa_text(r) == text);
  std::istringstream is2(text);
  const auto r2 = read_arpa(is2);
  std::mt19937_64 rng(7);
  const auto sents = testing_util::random_sentences(100, {"the", "cat", "dog", "sat", "a", "down", "end", "q"}, 10, rng);
  for (const auto& s : sents) {
    CHECK(lm_logprob(r, s) == lm_logprob(r2, s));
    CHECK(lm_logprob(r, s) == doctest::Approx(lm_logprob(m, s)).epsilon(1e-6));
  }
}

TEST_CASE("minimal and malformed ARPA") {
  std::istringstream ok("\\data\\\nngram 1=1\n\n\\1-grams:\n-1.0\ta\n\n\\end\\\n");
  const auto m = read_arpa(ok);
  CHECK(m.order() == 1);
  CHECK(m.log10_cond({}, m.id("a")) == -1.0);

  std::string msg;
  CHECK(parse_error("\\data\\\nngram 1=2\n\n\\1-grams:\n-1.0\ta\n\n\\end\\\n", &msg) == ErrorCode::kParse);
  CHECK(msg.find("line") != std::string::npos);
  CHECK(parse_error("") == ErrorCode::kParse);
  CHECK(parse_error("\\data\\\nngram 1=1\n\\1-grams:\nx\ta\n\\end\\\n") == ErrorCode::kParse);
  CHECK(parse_error("\\data\\\nngram 1=1\n\\1-grams:\n-1\ta\n") == ErrorCode::kParse);
  CHECK(parse_error("\\data\\\nngram 2=1\n\\2-grams:\n-1\ta b\n\\end\\\n") == ErrorCode::kParse);
  CHECK(parse_error("\\data\\\nngram 1=2\n\\1-grams:\n-1\ta\n-1\ta\n\\end\\\n") == ErrorCode::kParse);
}

TEST_CASE("training errors") {
  CHECK_THROWS_AS(train_ngram({}, 3), Error);
  CHECK_THROWS_AS(train_ngram(kCorpus, 0), Error);
  CHECK_THROWS_AS(train_ngram(kCorpus, 5), Error);
  CHECK_THROWS_AS(train_ngram(kCorpus, 2, 1.0), Error);
  CHECK_THROWS_AS(read_arpa(std::string("/nonexistent/model.arpa")), Error);
}

}  // TEST_SUITE
