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

// Adam training of the negative log-likelihood, checkpoints, evaluation and
// synthetic toy tasks.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "npmt/data.hpp"
#include "npmt/decode.hpp"
#include "npmt/model.hpp"

namespace npmt {

struct TrainConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  std::size_t max_len = 0;          // drop longer pairs; 0 keeps everything
  bool halve_on_plateau = false;    // halve lr when dev NLL does not improve
  double time_budget_s = 0.0;       // stop after the epoch that crosses it; 0 = none
  double stop_exact_match = 0.0;    // stop once dev exact match reaches it; 0 = never
  ModelConfig model;                // dropout, L and window live here

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
  // key=value lines, '#' comments.
  static TrainConfig load(const std::string& path);
};

std::map<std::string, std::string> parse_key_values(const std::string& text);

// ---------------------------------------------------------------- Adam

template <typename Real>
struct AdamState {
  Model<Real> m;
  Model<Real> v;
  std::size_t step = 0;
};

template <typename Real>
AdamState<Real> make_adam(const Model<Real>& params);

// One Adam update on flat arrays (t >= 1 is the step after incrementing).
template <typename Real>
void adam_update(std::span<Real> param, std::span<const Real> grad, std::span<Real> m,
                 std::span<Real> v, std::size_t t, const TrainConfig& cfg);

template <typename Real>
double global_norm(const Model<Real>& grads);

// Rejects non-finite gradients (naming array and index), clips to
// cfg.clip_norm, then applies Adam.  Returns the pre-clip norm.
template <typename Real>
double adam_step(Model<Real>& params, Model<Real>& grads, AdamState<Real>& state,
                 const TrainConfig& cfg);

template <typename Real>
void zero_model(Model<Real>& m);

// ---------------------------------------------------------------- checkpoints

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Real>
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  TrainConfig cfg;
  Model<Real> model;
  std::optional<AdamState<Real>> adam;
  std::size_t epoch = 0;
  std::size_t step = 0;
  double dev_loss = 0.0;
  std::vector<std::string> src_vocab;  // non-reserved tokens in id order
  std::vector<std::string> tgt_vocab;
};

template <typename Real>
void save_checkpoint(const std::string& path, const Checkpoint<Real>& ck);

// Tensors stored in the other precision are converted on load.
template <typename Real>
Checkpoint<Real> load_checkpoint(const std::string& path);

// ---------------------------------------------------------------- evaluation

struct EvalResult {
  double nll = 0.0;          // mean per sentence
  double exact_match = 0.0;  // fraction of greedy outputs equal to the reference
  double avg_seg_len = 0.0;  // NaN when every segment is empty
  std::vector<SegmentedOutput> outputs;
};

template <typename Real>
EvalResult evaluate(const Model<Real>& m, const std::vector<SentencePair>& pairs,
                    bool with_nll = true);

// Micro-averaged F1 over segment end offsets of non-empty segments.
// `reference` holds per-position segment lengths.
double boundary_f1(const std::vector<SegmentedOutput>& predicted,
                   const std::vector<std::vector<std::size_t>>& reference);

// ---------------------------------------------------------------- training

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double dev_nll = 0.0;
  double dev_exact_match = 0.0;
  double dev_avg_seg_len = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainHooks {
  std::string out_dir;                // last.ckpt / best.ckpt / metrics.jsonl; empty = none
  std::ostream* metrics = nullptr;    // extra JSON-lines sink
  std::function<void(const EpochMetrics&)> on_epoch;
  std::vector<std::string> src_vocab;  // stored in checkpoints
  std::vector<std::string> tgt_vocab;
};

template <typename Real>
struct TrainResult {
  std::vector<EpochMetrics> history;
  Model<Real> best;
  std::size_t best_epoch = 0;
  std::size_t skipped_pairs = 0;  // unsegmentable or over max_len
};

// Trains `model` in place (it ends as the last-epoch model).
template <typename Real>
TrainResult<Real> train_loop(Model<Real>& model, const std::vector<SentencePair>& train,
                             const std::vector<SentencePair>& dev, const TrainConfig& cfg,
                             const TrainHooks& hooks = {});

// ---------------------------------------------------------------- toy tasks

enum class ToyKind { kPhraseCopy, kLocalSwap };

struct ToyTaskSpec {
  ToyKind kind = ToyKind::kPhraseCopy;
  std::size_t src_vocab = 20;
  std::size_t tgt_vocab = 40;
  std::size_t min_phrase = 1;
  std::size_t max_phrase = 3;
  std::size_t swap_distance = 1;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  std::size_t n_train = 5000;
  std::size_t n_dev = 500;
  std::size_t n_test = 500;
  std::uint64_t seed = 1;

  void validate() const;
};

// Source token -> target phrase, plus the tokens that open a swap.
struct ToyTable {
  std::map<std::string, std::vector<std::string>> phrases;
  std::set<std::string> triggers;
  std::size_t swap_distance = 1;
};

ToyTable make_toy_table(const ToyTaskSpec& spec);

// Order in which source positions are mapped.  Left to right, a trigger at i
// is exchanged with a non-trigger at i + d when neither is already moved.
std::vector<std::size_t> toy_order(const ToyTable& table, const std::vector<std::string>& src,
                                   ToyKind kind);
std::vector<std::string> toy_target(const ToyTable& table, const std::vector<std::string>& src,
                                    ToyKind kind);

struct ToySplit {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  std::vector<std::vector<std::size_t>> segments;  // planted per-position lengths
};

struct ToyCorpus {
  ToyTable table;
  std::map<Split, ToySplit> splits;
  double mean_phrase_len(Split s) const;
};

ToyCorpus gen_toy(const ToyTaskSpec& spec);
void write_toy(const ToyCorpus& c, const std::string& dir);

// Vocabularies built from the training split, and encoded pairs for all.
struct EncodedToy {
  Vocab src_vocab;
  Vocab tgt_vocab;
  ParallelCorpus corpus;
};
EncodedToy encode_toy(const ToyCorpus& c);

}  // namespace npmt
