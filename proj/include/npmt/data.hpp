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

// Corpus ingestion, vocabularies and length-bucketed batching.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "npmt/layers.hpp"

namespace npmt {

// Reserved ids shared by source and target vocabularies.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kEosSeg = 2;  // end-of-segment symbol "$"
inline constexpr TokenId kBosSeg = 3;
inline constexpr std::size_t kNumReserved = 4;

class Vocab {
 public:
  Vocab();

  // Keeps the `max_size` most frequent tokens seen at least `min_count`
  // times (ties broken lexicographically).  max_size 0 means unlimited.
  static Vocab build(const std::vector<std::string>& lines, std::size_t max_size = 0,
                     std::size_t min_count = 1);
  // Non-reserved tokens, in id order.
  static Vocab from_tokens(const std::vector<std::string>& tokens);
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return words_.size(); }
  TokenId id(const std::string& w) const;
  const std::string& word(TokenId id) const;
  std::vector<std::string> tokens() const;  // non-reserved, id order

  std::vector<TokenId> encode(const std::string& line) const;
  std::string decode(const std::vector<TokenId>& ids) const;

  static bool is_reserved_surface(const std::string& w);

 private:
  void add(const std::string& w);

  std::vector<std::string> words_;
  std::map<std::string, TokenId> ids_;
};

std::vector<std::string> split_ws(const std::string& line);
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

enum class Split { kTrain, kDev, kTest };

struct SentencePair {
  std::vector<TokenId> src;
  std::vector<TokenId> tgt;
};

struct ParallelCorpus {
  std::map<Split, std::vector<SentencePair>> splits;

  std::vector<SentencePair>& operator[](Split s) { return splits[s]; }
  const std::vector<SentencePair>& at(Split s) const;
};

// Reads `<prefix>.src` / `<prefix>.tgt` style file pairs; line counts must match
// and pairs with an empty side are dropped.
std::vector<SentencePair> load_pairs(const std::string& src_path, const std::string& tgt_path,
                                     const Vocab& src_vocab, const Vocab& tgt_vocab);

struct Batch {
  Split split = Split::kTrain;
  std::vector<std::size_t> indices;  // into the split's pair list
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::size_t dropped = 0;  // pairs longer than max_len
  std::size_t padding = 0;  // source pad tokens implied by the bucketing
};

// Sorts by source length (stable, ties shuffled by seed), cuts into batches
// of `batch_size`, then shuffles batch order with the same seed.
BatchPlan make_batches(const std::vector<SentencePair>& pairs, Split split,
                       std::size_t batch_size, std::size_t max_len, std::uint64_t seed);

}  // namespace npmt
