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

// Back-off n-gram language model: interpolated Kneser-Ney estimation with a
// single absolute discount, ARPA text IO, and back-off scoring.
//
// Probabilities are held as log10 (the ARPA convention); lm_logprob converts
// to natural log on the way out.

#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace npmt {

using LmWord = int;

struct NgramEntry {
  double log10_prob = 0.0;
  double log10_bow = 0.0;
  bool has_bow = false;
};

class ArpaModel {
 public:
  static constexpr const char* kBos = "<s>";
  static constexpr const char* kEos = "</s>";
  static constexpr const char* kUnk = "<unk>";

  ArpaModel();

  int order() const { return static_cast<int>(tables_.size()); }
  void set_order(int n);

  // Adds `w` to the vocabulary if needed.
  LmWord intern(const std::string& w);
  // Maps unknown words to <unk>.
  LmWord id(const std::string& w) const;
  const std::string& word(LmWord id) const { return words_.at(id); }
  std::size_t vocab_size() const { return words_.size(); }

  LmWord bos() const { return bos_; }
  LmWord eos() const { return eos_; }
  LmWord unk() const { return unk_; }

  using Table = std::map<std::vector<LmWord>, NgramEntry>;
  Table& table(int n) { return tables_.at(n - 1); }
  const Table& table(int n) const { return tables_.at(n - 1); }
  const NgramEntry* find(std::span<const LmWord> ngram) const;

  // log10 p(w | context) by back-off; uses at most order-1 context words.
  double log10_cond(std::span<const LmWord> context, LmWord w) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, LmWord> ids_;
  std::vector<Table> tables_;
  LmWord bos_, eos_, unk_;
};

// Sentences are whitespace-free word lists without sentence markers.
ArpaModel train_ngram(const std::vector<std::vector<std::string>>& corpus, int order,
                      double discount = 0.75);

void write_arpa(const ArpaModel& m, std::ostream& os);
void write_arpa(const ArpaModel& m, const std::string& path);
ArpaModel read_arpa(std::istream& is);
ArpaModel read_arpa(const std::string& path);

// Natural-log probability of the sentence with a leading <s>; the </s> term is
// included when `with_eos` is set.
double lm_logprob(const ArpaModel& m, std::span<const LmWord> sentence, bool with_eos = true);
double lm_logprob(const ArpaModel& m, const std::vector<std::string>& sentence,
                  bool with_eos = true);

}  // namespace npmt
