// Copyright 2026 The structkd Authors.
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


#ifndef STRUCTKD_CORPUS_HPP_
#define STRUCTKD_CORPUS_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "structkd/lattice.hpp"
#include "structkd/tagset.hpp"

namespace structkd {

// A sentence as read from a CoNLL file, before any id mapping.
struct RawSentence {
  std::vector<std::string> tokens;
  std::vector<std::string> labels;

  bool operator==(const RawSentence&) const = default;
};

using RawSplit = std::vector<RawSentence>;

// Labelled sentence with ids resolved against a vocabulary and tagset.
struct Example {
  std::string id;  // stable sentence identifier, e.g. "en/train/17"
  std::string language;
  std::vector<std::string> words;
  std::vector<int> tokens;
  LabelSequence gold;
};

struct Corpus {
  std::string language;
  std::vector<Example> train, dev, test;
  Tagset tagset;
};

// Whitespace-separated columns; blank line ends a sentence; "-DOCSTART-"
// lines are skipped. Throws ParseError on ragged rows.
RawSplit read_conll(std::istream& in, int token_column = 0, int label_column = -1);
RawSplit read_conll(const std::filesystem::path& path, int token_column = 0, int label_column = -1);

// Two columns "token label", blank line between sentences.
void write_conll(std::ostream& out, const RawSplit& split);
void write_conll(const std::filesystem::path& path, const RawSplit& split);

// Sorted label set over the given splits, so ids do not depend on corpus
// order. "O" (when present) gets id 0.
Tagset build_tagset(const std::vector<const RawSplit*>& splits);

// Lowercased surface form -> id. Id 0 is the reserved unknown token.
class Vocab {
 public:
  static constexpr int kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab();
  explicit Vocab(const std::vector<std::string>& words_in_order);

  static std::string normalize(std::string_view word);

  // Returns the id, adding the word if absent.
  int add(std::string_view word);
  int lookup(std::string_view word) const;
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Resolves a raw split; unknown labels throw DataError (no silent drop).
std::vector<Example> to_examples(const RawSplit& split, const std::string& language,
                                 const std::string& split_name, const Vocab& vocab,
                                 const Tagset& tagset);

}  // namespace structkd

#endif  // STRUCTKD_CORPUS_HPP_
