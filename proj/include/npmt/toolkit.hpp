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

// Analysis utilities: segmentation traces, phrase-mapping tables, reordering
// gate export, corpus BLEU and the window-size sweep.

#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "npmt/data.hpp"
#include "npmt/decode.hpp"
#include "npmt/train.hpp"

namespace npmt {

// ---------------------------------------------------------------- traces

struct TraceSentence {
  std::vector<std::string> source;
  std::vector<std::vector<std::string>> segments;  // one per source position
};

TraceSentence make_trace(const std::vector<std::string>& source, const SegmentedOutput& out,
                         const Vocab& tgt_vocab);

// "index \t source token \t segment text or $" per position, blank line
// between sentences.
void write_trace(std::ostream& os, const TraceSentence& s);
std::vector<TraceSentence> read_trace(std::istream& is);
std::vector<TraceSentence> read_trace(const std::string& path);

// ---------------------------------------------------------------- phrase maps

enum class PhraseBucket { kOneToOne, kOneToMany, kManyToOne, kManyToMany };
const char* bucket_name(PhraseBucket b);

struct PhraseMapping {
  std::vector<std::string> group;    // source words
  std::vector<std::string> segment;  // target words
  std::size_t count = 0;
  PhraseBucket bucket = PhraseBucket::kOneToOne;
};

struct PhraseMapTable {
  std::vector<PhraseMapping> mappings;  // by count desc, then text
  std::map<PhraseBucket, std::size_t> bucket_counts;
  std::size_t total = 0;
  std::size_t skipped_sentences = 0;  // no non-empty segment at all

  // Most frequent mappings in `bucket`; `drop_unk` removes any mapping
  // whose group or segment contains `unk`.
  std::vector<PhraseMapping> top(PhraseBucket bucket, std::size_t n, bool drop_unk = false,
                                 const std::string& unk = "<unk>") const;
};

// Position groups of one sentence: each non-empty segment collects the
// preceding empty-segment positions; trailing empty positions join the last
// group.  Empty when the sentence has no non-empty segment.
std::vector<std::vector<std::size_t>> group_positions(const TraceSentence& s);

PhraseMapTable extract_phrase_map(const std::vector<TraceSentence>& traces);
void write_phrase_map(std::ostream& os, const PhraseMapTable& t, std::size_t top_n = 10,
                      bool drop_unk = false);

// ---------------------------------------------------------------- gates

struct GateMatrix {
  Array<double> values;  // [T' x window]
  std::vector<std::string> source;
  std::vector<std::string> row_labels;  // greedy segment per position
};

template <typename Real>
GateMatrix export_gates(const Model<Real>& m, std::span<const TokenId> src,
                        const Vocab& src_vocab, const Vocab& tgt_vocab);
void write_gates(std::ostream& os, const GateMatrix& g);

// ---------------------------------------------------------------- BLEU

struct BleuResult {
  double score = 0.0;  // 0..100
  std::vector<double> precisions;
  double brevity_penalty = 1.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

// Corpus BLEU.  Orders with no candidate n-grams at all are left out of the
// geometric mean.  `smooth` adds one to matches and totals for n >= 2.
BleuResult bleu(const std::vector<std::vector<std::string>>& candidates,
                const std::vector<std::vector<std::string>>& references, int max_n = 4,
                bool smooth = false);

// ---------------------------------------------------------------- toy runs

struct ToyRunResult {
  EncodedToy data;
  TrainResult<float> train;
  EvalResult test;  // best-dev model on the test split
  double test_bleu = 0.0;
  double boundary_f1 = 0.0;
  double planted_mean = 0.0;  // planted mean phrase length on test
};

// Generates the task, trains a fresh model seeded by cfg.seed and scores it.
ToyRunResult run_toy(const ToyTaskSpec& task, const TrainConfig& cfg,
                     const TrainHooks& hooks = {});

struct SweepRow {
  std::size_t window = 0;
  double dev_exact_match = 0.0;
  double dev_bleu = 0.0;
  double test_exact_match = 0.0;
  std::size_t epochs = 0;
  double seconds = 0.0;
};

// One model per window size on the same seeded data.
std::vector<SweepRow> sweep_windows(const ToyTaskSpec& task, const std::vector<std::size_t>& sizes,
                                    const TrainConfig& base);
void write_sweep(std::ostream& os, const std::vector<SweepRow>& rows);

}  // namespace npmt
