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

#include "npmt/toolkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace npmt {

// ---------------------------------------------------------------- traces

TraceSentence make_trace(const std::vector<std::string>& source, const SegmentedOutput& out,
                         const Vocab& tgt_vocab) {
  if (source.size() != out.segments.size())
    throw Error(ErrorCode::kDimension, "trace: source length and segment count differ");
  TraceSentence t;
  t.source = source;
  for (const auto& seg : out.segments) {
    std::vector<std::string> words;
    for (TokenId id : seg) words.push_back(tgt_vocab.word(id));
    t.segments.push_back(std::move(words));
  }
  return t;
}

void write_trace(std::ostream& os, const TraceSentence& s) {
  for (std::size_t i = 0; i < s.source.size(); ++i) {
    os << i << '\t' << s.source[i] << '\t';
    if (s.segments[i].empty()) {
      os << '$';
    } else {
      for (std::size_t k = 0; k < s.segments[i].size(); ++k) os << (k ? " " : "") << s.segments[i][k];
    }
    os << '\n';
  }
  os << '\n';
}

std::vector<TraceSentence> read_trace(std::istream& is) {
  std::vector<TraceSentence> out;
  TraceSentence cur;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (!cur.source.empty()) out.push_back(std::move(cur));
    cur = {};
  };
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos)
      throw Error(ErrorCode::kParse, "trace line " + std::to_string(lineno) + ": expected 3 fields");
    if (line.substr(0, a) != std::to_string(cur.source.size()))
      throw Error(ErrorCode::kParse, "trace line " + std::to_string(lineno) + ": bad position index");
    cur.source.push_back(line.substr(a + 1, b - a - 1));
    const std::string seg = line.substr(b + 1);
    cur.segments.push_back(seg == "$" ? std::vector<std::string>{} : split_ws(seg));
  }
  flush();
  return out;
}

std::vector<TraceSentence> read_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  return read_trace(is);
}

// ---------------------------------------------------------------- phrase maps

const char* bucket_name(PhraseBucket b) {
  switch (b) {
    case PhraseBucket::kOneToOne: return "One->One";
    case PhraseBucket::kOneToMany: return "One->Many";
    case PhraseBucket::kManyToOne: return "Many->One";
    case PhraseBucket::kManyToMany: return "Many->Many";
  }
  return "?";
}

std::vector<std::vector<std::size_t>> group_positions(const TraceSentence& s) {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < s.segments.size(); ++i) {
    pending.push_back(i);
    if (!s.segments[i].empty()) {
      groups.push_back(std::move(pending));
      pending.clear();
    }
  }
  if (!pending.empty() && !groups.empty())
    groups.back().insert(groups.back().end(), pending.begin(), pending.end());
  return groups;
}

PhraseMapTable extract_phrase_map(const std::vector<TraceSentence>& traces) {
  std::map<std::pair<std::vector<std::string>, std::vector<std::string>>, std::size_t> counts;
  PhraseMapTable t;
  for (const auto& s : traces) {
    const auto groups = group_positions(s);
    if (groups.empty()) {
      ++t.skipped_sentences;
      continue;
    }
    for (const auto& g : groups) {
      std::vector<std::string> src, seg;
      for (auto i : g) {
        src.push_back(s.source[i]);
        seg.insert(seg.end(), s.segments[i].begin(), s.segments[i].end());
      }
      ++counts[{std::move(src), std::move(seg)}];
    }
  }
  for (auto& [key, n] : counts) {
    PhraseMapping m{key.first, key.second, n, PhraseBucket::kOneToOne};
    const bool many_src = m.group.size() > 1, many_tgt = m.segment.size() > 1;
    m.bucket = many_src ? (many_tgt ? PhraseBucket::kManyToMany : PhraseBucket::kManyToOne)
                        : (many_tgt ? PhraseBucket::kOneToMany : PhraseBucket::kOneToOne);
    t.bucket_counts[m.bucket] += n;
    t.total += n;
    t.mappings.push_back(std::move(m));
  }
  std::stable_sort(t.mappings.begin(), t.mappings.end(),
                   [](const PhraseMapping& a, const PhraseMapping& b) { return a.count > b.count; });
  return t;
}

std::vector<PhraseMapping> PhraseMapTable::top(PhraseBucket bucket, std::size_t n, bool drop_unk,
                                               const std::string& unk) const {
  std::vector<PhraseMapping> out;
  for (const auto& m : mappings) {
    if (out.size() >= n) break;
    if (m.bucket != bucket) continue;
    if (drop_unk && (std::count(m.group.begin(), m.group.end(), unk) ||
                     std::count(m.segment.begin(), m.segment.end(), unk)))
      continue;
    out.push_back(m);
  }
  return out;
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + v[i];
  return s;
}

}  // namespace

void write_phrase_map(std::ostream& os, const PhraseMapTable& t, std::size_t top_n, bool drop_unk) {
  os << "# total\t" << t.total << "\n# skipped_sentences\t" << t.skipped_sentences << "\n";
  const PhraseBucket all[] = {PhraseBucket::kOneToOne, PhraseBucket::kOneToMany,
                              PhraseBucket::kManyToOne, PhraseBucket::kManyToMany};
  for (auto b : all) {
    auto it = t.bucket_counts.find(b);
    os << "# " << bucket_name(b) << '\t' << (it == t.bucket_counts.end() ? 0 : it->second) << '\n';
  }
  os << "bucket\tcount\tsource\ttarget\n";
  for (auto b : all)
    for (const auto& m : t.top(b, top_n, drop_unk))
      os << bucket_name(b) << '\t' << m.count << '\t' << join(m.group) << '\t' << join(m.segment)
         << '\n';
}

// ---------------------------------------------------------------- gates

template <typename Real>
GateMatrix export_gates(const Model<Real>& m, std::span<const TokenId> src,
                        const Vocab& src_vocab, const Vocab& tgt_vocab) {
  if (!m.enc.use_reordering)
    throw Error(ErrorCode::kConfig, "export_gates: model has no reordering layer");
  if (src.empty()) throw Error(ErrorCode::kEmptyInput, "export_gates: empty sentence");
  GateMatrix g;
  g.values = reorder_gates(embed(src, m.enc.embedding), m.enc.reorder).template cast<double>();
  const auto out = translate_greedy(m, src);
  for (std::size_t t = 0; t < src.size(); ++t) {
    g.source.push_back(src_vocab.word(src[t]));
    std::vector<std::string> words;
    for (TokenId id : out.segments[t]) words.push_back(tgt_vocab.word(id));
    g.row_labels.push_back(words.empty() ? "$" : join(words));
  }
  return g;
}

void write_gates(std::ostream& os, const GateMatrix& g) {
  const std::size_t w = g.values.cols();
  const long tau = static_cast<long>(w / 2);
  os << "position\tsource\tsegment";
  for (long i = -tau; i <= tau; ++i) os << "\tg" << (i > 0 ? "+" : "") << i;
  os << '\n';
  char buf[32];
  for (std::size_t t = 0; t < g.values.rows(); ++t) {
    os << t << '\t' << g.source[t] << '\t' << g.row_labels[t];
    for (std::size_t i = 0; i < w; ++i) {
      std::snprintf(buf, sizeof buf, "%.6f", g.values(t, i));
      os << '\t' << buf;
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------- BLEU

BleuResult bleu(const std::vector<std::vector<std::string>>& candidates,
                const std::vector<std::vector<std::string>>& references, int max_n, bool smooth) {
  if (candidates.empty()) throw Error(ErrorCode::kEmptyInput, "bleu: empty candidate corpus");
  if (candidates.size() != references.size())
    throw Error(ErrorCode::kDimension, "bleu: candidate and reference line counts differ");
  if (max_n < 1) throw Error(ErrorCode::kInvalidArgument, "bleu: max_n must be >= 1");
  BleuResult r;
  std::vector<double> match(max_n, 0.0), total(max_n, 0.0);
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& c = candidates[s];
    const auto& ref = references[s];
    r.hyp_len += c.size();
    r.ref_len += ref.size();
    for (int n = 1; n <= max_n; ++n) {
      std::map<std::vector<std::string>, int> ref_counts;
      for (std::size_t i = 0; i + n <= ref.size(); ++i)
        ++ref_counts[std::vector<std::string>(ref.begin() + i, ref.begin() + i + n)];
      std::map<std::vector<std::string>, int> cand_counts;
      for (std::size_t i = 0; i + n <= c.size(); ++i)
        ++cand_counts[std::vector<std::string>(c.begin() + i, c.begin() + i + n)];
      for (const auto& [g, k] : cand_counts) {
        auto it = ref_counts.find(g);
        match[n - 1] += std::min(k, it == ref_counts.end() ? 0 : it->second);
        total[n - 1] += k;
      }
    }
  }
  if (r.hyp_len == 0) {
    r.score = r.ref_len == 0 ? 100.0 : 0.0;
    r.brevity_penalty = r.ref_len == 0 ? 1.0 : 0.0;
    return r;
  }
  double log_sum = 0.0;
  int used = 0;
  bool zero = false;
  for (int n = 1; n <= max_n; ++n) {
    double m = match[n - 1], t = total[n - 1];
    if (smooth && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    if (t == 0.0) continue;
    const double p = m / t;
    r.precisions.push_back(p);
    ++used;
    if (p == 0.0) {
      zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  r.brevity_penalty = r.hyp_len >= r.ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(r.ref_len) /
                                               static_cast<double>(r.hyp_len));
  r.score = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / used);
  return r;
}

// ---------------------------------------------------------------- toy runs

namespace {

std::vector<std::vector<std::string>> words_of(const std::vector<SegmentedOutput>& outs,
                                               const Vocab& v) {
  std::vector<std::vector<std::string>> w;
  for (const auto& o : outs) {
    std::vector<std::string> line;
    for (TokenId id : o.tokens()) line.push_back(v.word(id));
    w.push_back(std::move(line));
  }
  return w;
}

std::vector<std::vector<std::string>> words_of(const std::vector<std::string>& lines) {
  std::vector<std::vector<std::string>> w;
  for (const auto& l : lines) w.push_back(split_ws(l));
  return w;
}

}  // namespace

ToyRunResult run_toy(const ToyTaskSpec& task, const TrainConfig& cfg, const TrainHooks& hooks) {
  const ToyCorpus toy = gen_toy(task);
  ToyRunResult r;
  r.data = encode_toy(toy);
  TrainConfig run = cfg;
  run.model.src_vocab = r.data.src_vocab.size();
  run.model.tgt_vocab = r.data.tgt_vocab.size();
  run.model.eos = kEosSeg;
  auto model = make_model<float>(run.model);
  Rng rng(run.seed);
  init_model(model, rng);
  TrainHooks h = hooks;
  if (h.src_vocab.empty()) h.src_vocab = r.data.src_vocab.tokens();
  if (h.tgt_vocab.empty()) h.tgt_vocab = r.data.tgt_vocab.tokens();
  r.train = train_loop(model, r.data.corpus.at(Split::kTrain), r.data.corpus.at(Split::kDev), run, h);
  r.test = evaluate(r.train.best, r.data.corpus.at(Split::kTest), false);
  r.boundary_f1 = boundary_f1(r.test.outputs, toy.splits.at(Split::kTest).segments);
  r.planted_mean = toy.mean_phrase_len(Split::kTest);
  r.test_bleu = bleu(words_of(r.test.outputs, r.data.tgt_vocab),
                     words_of(toy.splits.at(Split::kTest).tgt))
                    .score;
  return r;
}

std::vector<SweepRow> sweep_windows(const ToyTaskSpec& task, const std::vector<std::size_t>& sizes,
                                    const TrainConfig& base) {
  if (sizes.empty()) throw Error(ErrorCode::kInvalidArgument, "sweep_windows: no window sizes");
  for (auto s : sizes)
    if (s == 0 || s % 2 == 0)
      throw Error(ErrorCode::kConfig, "sweep_windows: sizes must be odd and >= 1");
  const ToyCorpus toy = gen_toy(task);
  std::vector<SweepRow> rows;
  for (auto size : sizes) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainConfig cfg = base;
    cfg.model.window = size;
    cfg.model.use_reordering = true;
    const auto res = run_toy(task, cfg);
    SweepRow row;
    row.window = size;
    const auto dev = evaluate(res.train.best, res.data.corpus.at(Split::kDev), false);
    row.dev_exact_match = dev.exact_match;
    row.dev_bleu =
        bleu(words_of(dev.outputs, res.data.tgt_vocab), words_of(toy.splits.at(Split::kDev).tgt)).score;
    row.test_exact_match = res.test.exact_match;
    row.epochs = res.train.history.size();
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  return rows;
}

void write_sweep(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "window\tdev_exact_match\tdev_bleu\ttest_exact_match\tepochs\tseconds\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu\t%.4f\t%.2f\t%.4f\t%zu\t%.1f\n", r.window,
                  r.dev_exact_match, r.dev_bleu, r.test_exact_match, r.epochs, r.seconds);
    os << buf;
  }
}

template GateMatrix export_gates<float>(const Model<float>&, std::span<const TokenId>, const Vocab&,
                                        const Vocab&);
template GateMatrix export_gates<double>(const Model<double>&, std::span<const TokenId>,
                                         const Vocab&, const Vocab&);

}  // namespace npmt
