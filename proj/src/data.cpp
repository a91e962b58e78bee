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

#include "npmt/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace npmt {

namespace {

const char* const kReservedSurface[kNumReserved] = {"<pad>", "<unk>", "$", "<bos>"};

}  // namespace

Vocab::Vocab() {
  for (const char* w : kReservedSurface) add(w);
}

bool Vocab::is_reserved_surface(const std::string& w) {
  return std::find(std::begin(kReservedSurface), std::end(kReservedSurface), w) !=
         std::end(kReservedSurface);
}

void Vocab::add(const std::string& w) {
  if (ids_.count(w)) return;
  ids_.emplace(w, static_cast<TokenId>(words_.size()));
  words_.push_back(w);
}

Vocab Vocab::build(const std::vector<std::string>& lines, std::size_t max_size,
                   std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& line : lines)
    for (const auto& w : split_ws(line))
      if (!is_reserved_surface(w)) ++freq[w];
  std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  for (const auto& [w, c] : items) {
    if (c < min_count) break;
    if (max_size && v.size() - kNumReserved >= max_size) break;
    v.add(w);
  }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& w : tokens) {
    if (is_reserved_surface(w))
      throw Error(ErrorCode::kInvalidArgument, "vocab: reserved token '" + w + "' in token list");
    v.add(w);
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  return from_tokens(read_lines(path));
}

void Vocab::save(const std::string& path) const { write_lines(path, tokens()); }

TokenId Vocab::id(const std::string& w) const {
  if (is_reserved_surface(w)) return kUnk;
  auto it = ids_.find(w);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
    throw Error(ErrorCode::kOutOfVocab, "vocab: id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::vector<std::string> Vocab::tokens() const {
  return {words_.begin() + kNumReserved, words_.end()};
}

std::vector<TokenId> Vocab::encode(const std::string& line) const {
  std::vector<TokenId> out;
  for (const auto& w : split_ws(line)) out.push_back(id(w));
  return out;
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += word(ids[i]);
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(std::move(w));
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  for (const auto& l : lines) os << l << '\n';
  if (!os) throw Error(ErrorCode::kIo, "write failed: " + path);
}

const std::vector<SentencePair>& ParallelCorpus::at(Split s) const {
  static const std::vector<SentencePair> empty;
  auto it = splits.find(s);
  return it == splits.end() ? empty : it->second;
}

std::vector<SentencePair> load_pairs(const std::string& src_path, const std::string& tgt_path,
                                     const Vocab& src_vocab, const Vocab& tgt_vocab) {
  const auto src = read_lines(src_path);
  const auto tgt = read_lines(tgt_path);
  if (src.size() != tgt.size())
    throw Error(ErrorCode::kParse, "corpus: " + src_path + " has " + std::to_string(src.size()) +
                                       " lines but " + tgt_path + " has " +
                                       std::to_string(tgt.size()));
  std::vector<SentencePair> pairs;
  for (std::size_t i = 0; i < src.size(); ++i) {
    SentencePair p{src_vocab.encode(src[i]), tgt_vocab.encode(tgt[i])};
    if (p.src.empty() || p.tgt.empty()) continue;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

BatchPlan make_batches(const std::vector<SentencePair>& pairs, Split split,
                       std::size_t batch_size, std::size_t max_len, std::uint64_t seed) {
  if (batch_size == 0) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  BatchPlan plan;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (max_len && (pairs[i].src.size() > max_len || pairs[i].tgt.size() > max_len)) {
      ++plan.dropped;
      continue;
    }
    keep.push_back(i);
  }
  Rng rng(seed);
  std::shuffle(keep.begin(), keep.end(), rng);
  std::stable_sort(keep.begin(), keep.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].src.size() < pairs[b].src.size();
  });
  for (std::size_t at = 0; at < keep.size(); at += batch_size) {
    Batch b;
    b.split = split;
    b.indices.assign(keep.begin() + static_cast<long>(at),
                     keep.begin() + static_cast<long>(std::min(keep.size(), at + batch_size)));
    std::size_t longest = 0;
    for (auto i : b.indices) longest = std::max(longest, pairs[i].src.size());
    for (auto i : b.indices) plan.padding += longest - pairs[i].src.size();
    plan.batches.push_back(std::move(b));
  }
  std::shuffle(plan.batches.begin(), plan.batches.end(), rng);
  return plan;
}

}  // namespace npmt
