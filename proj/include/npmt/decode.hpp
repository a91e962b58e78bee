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

// Non-autoregressive greedy decoding and position-synchronous beam search
// with word bonus and n-gram LM fusion.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "npmt/lm.hpp"
#include "npmt/model.hpp"
#include "npmt/swan.hpp"

namespace npmt {

// Q(y) = log p(y|x) + lambda1 * |y| + lambda2 * log p_lm(y).
struct BeamScorer {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  const ArpaModel* lm = nullptr;
  std::vector<LmWord> lm_ids;  // target token id -> LM word id

  BeamScorer() = default;
  BeamScorer(double l1, double l2, const ArpaModel* model = nullptr,
             const std::vector<std::string>& target_words = {});

  void validate() const;
  // Natural-log LM score of a target token sequence; 0 without an LM.
  double lm_logprob(std::span<const TokenId> tokens, bool with_eos) const;
};

struct Hypothesis {
  std::vector<TokenId> tokens;
  double model_logprob = 0.0;   // merged over segmentations when merging is on
  double lm_logprob = 0.0;      // of the prefix, without </s>
  SegmentedOutput segmentation; // highest-probability path among the merged ones
  double best_path_logprob = 0.0;

  std::size_t word_count() const { return tokens.size(); }
};

// Q from its parts; all log-probabilities in natural log.
double combine_scores(double model_logprob, std::size_t word_count, double lm_logprob,
                      double lambda1, double lambda2);

double score_hypothesis(const Hypothesis& h, const BeamScorer& s);

struct SegmentCandidate {
  std::vector<TokenId> tokens;
  double logprob = 0.0;  // includes the closing end-of-segment
};

template <typename Real>
SegmentedOutput greedy_decode(const Array<Real>& x, const SegmentDecoderParams<Real>& p,
                              const SwanConfig& cfg);

// Beam of `width` over one position's segment decoder.  Returns every
// hypothesis that closed with the end-of-segment symbol, best first; with
// width > 1 the empty segment is always included.
template <typename Real>
std::vector<SegmentCandidate> segment_candidates(std::span<const Real> x_row, std::size_t width,
                                                 const SwanConfig& cfg,
                                                 const SegmentDecoderParams<Real>& p);

struct BeamResult {
  SegmentedOutput output;
  Hypothesis best;
  std::vector<Hypothesis> final_beam;  // ranked by score_hypothesis
};

template <typename Real>
BeamResult beam_decode(const Array<Real>& x, std::size_t width, const BeamScorer& scorer,
                       const SwanConfig& cfg, const SegmentDecoderParams<Real>& p,
                       bool merge = true);

// Output tokens divided by the number of non-empty segments.
double avg_segment_length(const SegmentedOutput& out);
double avg_segment_length(const std::vector<SegmentedOutput>& outs);

// Encoder + decoder conveniences.
template <typename Real>
SegmentedOutput translate_greedy(const Model<Real>& m, std::span<const TokenId> src);

template <typename Real>
BeamResult translate_beam(const Model<Real>& m, std::span<const TokenId> src, std::size_t width,
                          const BeamScorer& scorer, bool merge = true);

}  // namespace npmt
