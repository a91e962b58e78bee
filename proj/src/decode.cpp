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

#include "npmt/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace npmt {

BeamScorer::BeamScorer(double l1, double l2, const ArpaModel* model,
                       const std::vector<std::string>& target_words)
    : lambda1(l1), lambda2(l2), lm(model) {
  if (lm)
    for (const auto& w : target_words) lm_ids.push_back(lm->id(w));
}

void BeamScorer::validate() const {
  if (lambda2 != 0.0 && !lm)
    throw Error(ErrorCode::kConfig, "beam scorer: lambda2 is non-zero but no language model");
}

double BeamScorer::lm_logprob(std::span<const TokenId> tokens, bool with_eos) const {
  if (!lm) return 0.0;
  std::vector<LmWord> ids;
  ids.reserve(tokens.size());
  for (TokenId t : tokens)
    ids.push_back(t >= 0 && static_cast<std::size_t>(t) < lm_ids.size() ? lm_ids[t] : lm->unk());
  return npmt::lm_logprob(*lm, ids, with_eos);
}

double combine_scores(double model_logprob, std::size_t word_count, double lm_logprob,
                      double lambda1, double lambda2) {
  return model_logprob + lambda1 * static_cast<double>(word_count) + lambda2 * lm_logprob;
}

double score_hypothesis(const Hypothesis& h, const BeamScorer& s) {
  s.validate();
  const double lm = s.lambda2 != 0.0 ? s.lm_logprob(h.tokens, true) : 0.0;
  return combine_scores(h.model_logprob, h.word_count(), lm, s.lambda1, s.lambda2);
}

// ---------------------------------------------------------------- greedy

template <typename Real>
SegmentedOutput greedy_decode(const Array<Real>& x, const SegmentDecoderParams<Real>& p,
                              const SwanConfig& cfg) {
  SegmentDecoder<Real> dec(p, cfg);
  SegmentedOutput out;
  Array<Real> logp;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto state = dec.initial(x.row_span(t));
    std::vector<TokenId> seg;
    TokenId input = -1;
    while (true) {
      dec.step(state, input, logp);
      if (seg.size() == cfg.max_segment_len) break;
      // First maximum wins, i.e. the lowest id among ties.
      const auto best = static_cast<TokenId>(
          std::max_element(logp.values().begin(), logp.values().end()) - logp.values().begin());
      if (best == cfg.eos) break;
      seg.push_back(best);
      input = best;
    }
    out.segments.push_back(std::move(seg));
  }
  return out;
}

// ---------------------------------------------------------------- candidates

template <typename Real>
std::vector<SegmentCandidate> segment_candidates(std::span<const Real> x_row, std::size_t width,
                                                 const SwanConfig& cfg,
                                                 const SegmentDecoderParams<Real>& p) {
  if (width == 0) throw Error(ErrorCode::kInvalidArgument, "segment_candidates: width must be >= 1");
  SegmentDecoder<Real> dec(p, cfg);
  using State = typename SegmentDecoder<Real>::State;
  struct Live {
    std::vector<TokenId> tokens;
    double logprob;
    State state;
  };
  struct Item {
    std::vector<TokenId> key;  // tokens, plus eos when closed
    double logprob;
    bool closed;
    std::size_t parent;
  };

  std::vector<SegmentCandidate> finished;
  std::vector<Live> live{{{}, 0.0, dec.initial(x_row)}};
  std::vector<State> stepped;
  double empty_logprob = 0.0;
  Array<Real> logp;
  for (std::size_t step = 0; !live.empty(); ++step) {
    std::vector<Item> pool;
    stepped.clear();
    for (std::size_t h = 0; h < live.size(); ++h) {
      State s = live[h].state;
      dec.step(s, live[h].tokens.empty() ? -1 : live[h].tokens.back(), logp);
      if (step == 0) empty_logprob = static_cast<double>(logp[cfg.eos]);
      stepped.push_back(std::move(s));
      const auto& base = live[h].tokens;
      if (base.size() == cfg.max_segment_len) {
        auto key = base;
        key.push_back(cfg.eos);
        pool.push_back({std::move(key), live[h].logprob + logp[cfg.eos], true, h});
        continue;
      }
      for (std::size_t v = 0; v < logp.size(); ++v) {
        auto key = base;
        key.push_back(static_cast<TokenId>(v));
        pool.push_back({std::move(key), live[h].logprob + logp[v],
                        static_cast<TokenId>(v) == cfg.eos, h});
      }
    }
    const std::size_t keep = std::min(width, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<long>(keep), pool.end(),
                      [](const Item& a, const Item& b) {
                        if (a.logprob != b.logprob) return a.logprob > b.logprob;
                        return a.key < b.key;
                      });
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      auto& it = pool[i];
      if (it.closed) {
        it.key.pop_back();
        finished.push_back({std::move(it.key), it.logprob});
      } else {
        next.push_back({std::move(it.key), it.logprob, stepped[it.parent]});
      }
    }
    live = std::move(next);
  }
  if (width > 1 && std::none_of(finished.begin(), finished.end(),
                                [](const SegmentCandidate& c) { return c.tokens.empty(); }))
    finished.push_back({{}, empty_logprob});
  std::stable_sort(finished.begin(), finished.end(),
                   [](const SegmentCandidate& a, const SegmentCandidate& b) {
                     if (a.logprob != b.logprob) return a.logprob > b.logprob;
                     return a.tokens < b.tokens;
                   });
  return finished;
}

// ---------------------------------------------------------------- beam

template <typename Real>
BeamResult beam_decode(const Array<Real>& x, std::size_t width, const BeamScorer& scorer,
                       const SwanConfig& cfg, const SegmentDecoderParams<Real>& p, bool merge) {
  if (width == 0) throw Error(ErrorCode::kInvalidArgument, "beam_decode: width must be >= 1");
  scorer.validate();
  std::vector<Hypothesis> beam(1);
  auto prune_score = [&](const Hypothesis& h) {
    return h.model_logprob + scorer.lambda1 * static_cast<double>(h.word_count()) +
           scorer.lambda2 * h.lm_logprob;
  };
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto cands = segment_candidates<Real>(x.row_span(t), width, cfg, p);
    std::map<std::vector<TokenId>, Hypothesis> merged;
    for (const auto& h : beam)
      for (const auto& c : cands) {
        Hypothesis n;
        n.tokens = h.tokens;
        n.tokens.insert(n.tokens.end(), c.tokens.begin(), c.tokens.end());
        n.model_logprob = h.model_logprob + c.logprob;
        n.best_path_logprob = h.best_path_logprob + c.logprob;
        n.segmentation = h.segmentation;
        n.segmentation.segments.push_back(c.tokens);
        auto it = merged.find(n.tokens);
        if (it == merged.end()) {
          merged.emplace(n.tokens, std::move(n));
          continue;
        }
        auto& old = it->second;
        const double path = n.best_path_logprob;
        if (merge) {
          old.model_logprob = logsumexp2(old.model_logprob, n.model_logprob);
        } else {
          old.model_logprob = std::max(old.model_logprob, n.model_logprob);
        }
        if (path > old.best_path_logprob) {
          old.best_path_logprob = path;
          old.segmentation = std::move(n.segmentation);
        }
      }
    std::vector<Hypothesis> pool;
    pool.reserve(merged.size());
    for (auto& [k, h] : merged) {
      if (scorer.lambda2 != 0.0) h.lm_logprob = scorer.lm_logprob(h.tokens, false);
      pool.push_back(std::move(h));
    }
    const std::size_t keep = std::min(width, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<long>(keep), pool.end(),
                      [&](const Hypothesis& a, const Hypothesis& b) {
                        const double sa = prune_score(a), sb = prune_score(b);
                        if (sa != sb) return sa > sb;
                        return a.tokens < b.tokens;
                      });
    pool.resize(keep);
    beam = std::move(pool);
  }
  std::vector<std::pair<double, Hypothesis>> ranked;
  for (auto& h : beam) ranked.emplace_back(score_hypothesis(h, scorer), std::move(h));
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second.tokens < b.second.tokens;
  });
  BeamResult res;
  for (auto& [s, h] : ranked) res.final_beam.push_back(std::move(h));
  res.best = res.final_beam.front();
  res.output = res.best.segmentation;
  return res;
}

double avg_segment_length(const std::vector<SegmentedOutput>& outs) {
  std::size_t tokens = 0, segments = 0;
  for (const auto& o : outs)
    for (const auto& s : o.segments)
      if (!s.empty()) {
        tokens += s.size();
        ++segments;
      }
  if (segments == 0)
    throw Error(ErrorCode::kUndefined, "avg_segment_length: every segment is empty");
  return static_cast<double>(tokens) / static_cast<double>(segments);
}

double avg_segment_length(const SegmentedOutput& out) {
  return avg_segment_length(std::vector<SegmentedOutput>{out});
}

template <typename Real>
SegmentedOutput translate_greedy(const Model<Real>& m, std::span<const TokenId> src) {
  return greedy_decode(encode_source(src, m.enc), m.dec, m.swan());
}

template <typename Real>
BeamResult translate_beam(const Model<Real>& m, std::span<const TokenId> src, std::size_t width,
                          const BeamScorer& scorer, bool merge) {
  return beam_decode(encode_source(src, m.enc), width, scorer, m.swan(), m.dec, merge);
}

#define NPMT_INSTANTIATE(Real)                                                                  \
  template SegmentedOutput greedy_decode<Real>(const Array<Real>&,                              \
                                               const SegmentDecoderParams<Real>&,               \
                                               const SwanConfig&);                              \
  template std::vector<SegmentCandidate> segment_candidates<Real>(                              \
      std::span<const Real>, std::size_t, const SwanConfig&, const SegmentDecoderParams<Real>&); \
  template BeamResult beam_decode<Real>(const Array<Real>&, std::size_t, const BeamScorer&,     \
                                        const SwanConfig&, const SegmentDecoderParams<Real>&,   \
                                        bool);                                                  \
  template SegmentedOutput translate_greedy<Real>(const Model<Real>&, std::span<const TokenId>); \
  template BeamResult translate_beam<Real>(const Model<Real>&, std::span<const TokenId>,        \
                                           std::size_t, const BeamScorer&, bool);

NPMT_INSTANTIATE(float)
NPMT_INSTANTIATE(double)
#undef NPMT_INSTANTIATE

}  // namespace npmt
