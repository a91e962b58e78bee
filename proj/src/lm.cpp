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

#include "npmt/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "npmt/numcore.hpp"

namespace npmt {

namespace {

constexpr double kLn10 = 2.302585092994045684;
constexpr double kNoProb = -99.0;

}  // namespace

ArpaModel::ArpaModel() {
  bos_ = intern(kBos);
  eos_ = intern(kEos);
  unk_ = intern(kUnk);
}

void ArpaModel::set_order(int n) {
  if (n < 1) throw Error(ErrorCode::kConfig, "lm: order must be >= 1");
  tables_.resize(static_cast<std::size_t>(n));
}

LmWord ArpaModel::intern(const std::string& w) {
  auto it = ids_.find(w);
  if (it != ids_.end()) return it->second;
  const LmWord id = static_cast<LmWord>(words_.size());
  words_.push_back(w);
  ids_.emplace(w, id);
  return id;
}

LmWord ArpaModel::id(const std::string& w) const {
  auto it = ids_.find(w);
  return it == ids_.end() ? unk_ : it->second;
}

const NgramEntry* ArpaModel::find(std::span<const LmWord> ngram) const {
  if (ngram.empty() || ngram.size() > tables_.size()) return nullptr;
  const auto& t = tables_[ngram.size() - 1];
  auto it = t.find(std::vector<LmWord>(ngram.begin(), ngram.end()));
  return it == t.end() ? nullptr : &it->second;
}

double ArpaModel::log10_cond(std::span<const LmWord> context, LmWord w) const {
  const std::size_t max_ctx = tables_.size() - 1;
  const std::size_t use = std::min(max_ctx, context.size());
  std::vector<LmWord> key(context.end() - static_cast<long>(use), context.end());
  double bow = 0.0;
  while (true) {
    key.push_back(w);
    if (const auto* e = find(key)) return bow + e->log10_prob;
    key.pop_back();
    if (key.empty()) break;
    if (const auto* c = find(key); c && c->has_bow) bow += c->log10_bow;
    key.erase(key.begin());
  }
  const auto* u = find(std::vector<LmWord>{unk_});
  return bow + (u ? u->log10_prob : kNoProb);
}

// ---------------------------------------------------------------- training

ArpaModel train_ngram(const std::vector<std::vector<std::string>>& corpus, int order,
                      double discount) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyInput, "lm: empty training corpus");
  if (order < 1 || order > 4) throw Error(ErrorCode::kConfig, "lm: order must be in [1, 4]");
  if (!(discount > 0.0 && discount < 1.0))
    throw Error(ErrorCode::kConfig, "lm: discount must be in (0, 1)");

  ArpaModel m;
  m.set_order(order);
  std::set<std::string> vocab;
  for (const auto& s : corpus) vocab.insert(s.begin(), s.end());
  for (const auto& w : vocab) m.intern(w);

  using Counts = std::map<std::vector<LmWord>, double>;
  const std::size_t N = static_cast<std::size_t>(order);
  std::vector<Counts> raw(N);
  for (const auto& s : corpus) {
    std::vector<LmWord> seq{m.bos()};
    for (const auto& w : s) seq.push_back(m.id(w));
    seq.push_back(m.eos());
    for (std::size_t i = 1; i < seq.size(); ++i)
      for (std::size_t n = 1; n <= N && n <= i + 1; ++n)
        raw[n - 1][std::vector<LmWord>(seq.begin() + static_cast<long>(i + 1 - n),
                                       seq.begin() + static_cast<long>(i + 1))] += 1.0;
  }

  // Lower orders use continuation counts, except n-grams pinned to <s>.
  std::vector<Counts> adj(N);
  adj[N - 1] = raw[N - 1];
  for (std::size_t n = N - 1; n >= 1; --n) {
    auto& a = adj[n - 1];
    for (const auto& [g, c] : raw[n - 1])
      if (g.front() == m.bos()) a[g] = c;
    for (const auto& [g, c] : raw[n]) {
      std::vector<LmWord> suffix(g.begin() + 1, g.end());
      if (suffix.front() != m.bos()) a[suffix] += 1.0;
    }
  }

  // Unigrams: discounted continuation mass plus a uniform floor over every
  // predictable word (everything but <s>).
  double total = 0.0, types = 0.0;
  for (const auto& [g, c] : adj[0]) {
    total += c;
    types += 1.0;
  }
  const double gamma0 = discount * types / total;
  const double uniform = 1.0 / static_cast<double>(m.vocab_size() - 1);
  std::vector<double> prob1(m.vocab_size(), gamma0 * uniform);
  for (const auto& [g, c] : adj[0]) prob1[g[0]] += (c - discount) / total;
  auto& t1 = m.table(1);
  for (LmWord w = 0; w < static_cast<LmWord>(m.vocab_size()); ++w)
    t1[{w}].log10_prob = w == m.bos() ? kNoProb : std::log10(prob1[w]);

  for (std::size_t n = 2; n <= N; ++n) {
    std::map<std::vector<LmWord>, std::pair<double, double>> ctx;  // denom, types
    for (const auto& [g, c] : adj[n - 1]) {
      auto& s = ctx[std::vector<LmWord>(g.begin(), g.end() - 1)];
      s.first += c;
      s.second += 1.0;
    }
    auto& lower = m.table(static_cast<int>(n - 1));
    auto& here = m.table(static_cast<int>(n));
    for (const auto& [h, s] : ctx) {
      auto it = lower.find(h);
      if (it == lower.end())
        throw Error(ErrorCode::kUndefined, "lm: context missing at lower order");
      it->second.log10_bow = std::log10(discount * s.second / s.first);
      it->second.has_bow = true;
    }
    for (const auto& [g, c] : adj[n - 1]) {
      const auto& s = ctx.at(std::vector<LmWord>(g.begin(), g.end() - 1));
      const double gamma = discount * s.second / s.first;
      const auto* lo = m.find(std::span<const LmWord>(g).subspan(1));
      if (!lo) throw Error(ErrorCode::kUndefined, "lm: suffix missing at lower order");
      const double p = (c - discount) / s.first + gamma * std::pow(10.0, lo->log10_prob);
      here[g].log10_prob = std::log10(p);
    }
  }
  return m;
}

// ---------------------------------------------------------------- ARPA io

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.7g", v);
  return buf;
}

}  // namespace

void write_arpa(const ArpaModel& m, std::ostream& os) {
  os << "\\data\\\n";
  for (int n = 1; n <= m.order(); ++n) os << "ngram " << n << "=" << m.table(n).size() << "\n";
  for (int n = 1; n <= m.order(); ++n) {
    os << "\n\\" << n << "-grams:\n";
    std::vector<std::pair<std::string, const NgramEntry*>> lines;
    for (const auto& [g, e] : m.table(n)) {
      std::string text;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (i) text += ' ';
        text += m.word(g[i]);
      }
      lines.emplace_back(std::move(text), &e);
    }
    std::sort(lines.begin(), lines.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [text, e] : lines) {
      os << fmt(e->log10_prob) << '\t' << text;
      if (e->has_bow && n < m.order()) os << '\t' << fmt(e->log10_bow);
      os << '\n';
    }
  }
  os << "\n\\end\\\n";
}

void write_arpa(const ArpaModel& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  write_arpa(m, os);
  if (!os) throw Error(ErrorCode::kIo, "write failed: " + path);
}

ArpaModel read_arpa(std::istream& is) {
  ArpaModel m;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw Error(ErrorCode::kParse, "arpa line " + std::to_string(lineno) + ": " + msg);
  };
  auto next = [&]() -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };

  if (!next()) fail("empty file");
  if (line != "\\data\\") fail("expected \\data\\");
  std::vector<std::size_t> counts;
  while (next() && line.rfind("ngram ", 0) == 0) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("malformed count line");
    int n = 0;
    long c = -1;
    try {
      n = std::stoi(line.substr(6, eq - 6));
      c = std::stol(line.substr(eq + 1));
    } catch (const std::exception&) {
      fail("malformed count line");
    }
    if (n != static_cast<int>(counts.size()) + 1 || c < 0) fail("unexpected count header");
    counts.push_back(static_cast<std::size_t>(c));
  }
  if (counts.empty()) fail("no ngram counts");
  m.set_order(static_cast<int>(counts.size()));

  for (std::size_t n = 1; n <= counts.size(); ++n) {
    if (line != "\\" + std::to_string(n) + "-grams:")
      fail("expected \\" + std::to_string(n) + "-grams:");
    std::size_t seen = 0;
    while (next() && line[0] != '\\') {
      std::istringstream fields(line);
      std::vector<std::string> tok;
      for (std::string f; fields >> f;) tok.push_back(f);
      if (tok.size() != n + 1 && tok.size() != n + 2) fail("wrong field count");
      char* end = nullptr;
      NgramEntry e;
      e.log10_prob = std::strtod(tok[0].c_str(), &end);
      if (*end) fail("bad probability '" + tok[0] + "'");
      if (tok.size() == n + 2) {
        e.log10_bow = std::strtod(tok[n + 1].c_str(), &end);
        if (*end) fail("bad backoff '" + tok[n + 1] + "'");
        e.has_bow = true;
      }
      std::vector<LmWord> g;
      for (std::size_t i = 1; i <= n; ++i) g.push_back(m.intern(tok[i]));
      if (!m.table(static_cast<int>(n)).emplace(std::move(g), e).second) fail("duplicate n-gram");
      ++seen;
    }
    if (seen != counts[n - 1])
      fail(std::to_string(n) + "-gram count " + std::to_string(seen) +
           " disagrees with header " + std::to_string(counts[n - 1]));
  }
  if (line != "\\end\\") fail("expected \\end\\");
  return m;
}

ArpaModel read_arpa(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_arpa(is);
}

// ---------------------------------------------------------------- scoring

double lm_logprob(const ArpaModel& m, std::span<const LmWord> sentence, bool with_eos) {
  std::vector<LmWord> hist{m.bos()};
  double total = 0.0;
  auto score = [&](LmWord w) {
    total += m.log10_cond(hist, w);
    hist.push_back(w);
  };
  for (LmWord w : sentence) score(w);
  if (with_eos) score(m.eos());
  return total * kLn10;
}

double lm_logprob(const ArpaModel& m, const std::vector<std::string>& sentence, bool with_eos) {
  std::vector<LmWord> ids;
  ids.reserve(sentence.size());
  for (const auto& w : sentence) ids.push_back(m.id(w));
  return lm_logprob(m, ids, with_eos);
}

}  // namespace npmt
