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


#include "structkd/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "structkd/errors.hpp"

namespace structkd {

RawSplit read_conll(std::istream& in, int token_column, int label_column) {
  RawSplit split;
  RawSentence current;
  std::string line;
  long line_no = 0;
  long width = -1;
  const auto flush = [&]() {
    if (!current.tokens.empty()) split.push_back(std::move(current));
    current = RawSentence{};
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream fields_in(line);
    std::vector<std::string> fields;
    for (std::string f; fields_in >> f;) fields.push_back(std::move(f));
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields[0].rfind("-DOCSTART-", 0) == 0) {
      flush();
      continue;
    }
    if (width < 0) width = static_cast<long>(fields.size());
    if (static_cast<long>(fields.size()) != width)
      throw ParseError("expected " + std::to_string(width) + " columns, found " +
                           std::to_string(fields.size()),
                       line_no);
    const int tok = token_column < 0 ? static_cast<int>(width) + token_column : token_column;
    const int lab = label_column < 0 ? static_cast<int>(width) + label_column : label_column;
    if (tok < 0 || tok >= width || lab < 0 || lab >= width)
      throw ParseError("column index out of range for " + std::to_string(width) + "-column data",
                       line_no);
    current.tokens.push_back(fields[static_cast<std::size_t>(tok)]);
    current.labels.push_back(fields[static_cast<std::size_t>(lab)]);
  }
  flush();
  if (split.empty()) spdlog::warn("CoNLL input contained no sentences");
  return split;
}

RawSplit read_conll(const std::filesystem::path& path, int token_column, int label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CoNLL file " + path.string());
  try {
    return read_conll(in, token_column, label_column);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_conll(std::ostream& out, const RawSplit& split) {
  for (const auto& s : split) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << ' ' << s.labels[i] << '\n';
    out << '\n';
  }
}

void write_conll(const std::filesystem::path& path, const RawSplit& split) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_conll(out, split);
}

Tagset build_tagset(const std::vector<const RawSplit*>& splits) {
  std::set<std::string> seen;
  for (const RawSplit* split : splits)
    for (const auto& s : *split) seen.insert(s.labels.begin(), s.labels.end());
  std::vector<std::string> labels;
  if (seen.erase("O")) labels.push_back("O");
  labels.insert(labels.end(), seen.begin(), seen.end());
  if (labels.empty()) throw DataError("no labels found to build a tagset");
  return Tagset(std::move(labels));
}

Vocab::Vocab() { add(kUnkToken); }

Vocab::Vocab(const std::vector<std::string>& words_in_order) {
  if (words_in_order.empty() || words_in_order.front() != kUnkToken)
    throw DataError("vocabulary must start with the unknown token");
  for (const auto& w : words_in_order) {
    if (index_.count(w)) throw DataError("duplicate vocabulary entry '" + w + "'");
    index_.emplace(w, static_cast<int>(words_.size()));
    words_.push_back(w);
  }
}

std::string Vocab::normalize(std::string_view word) {
  std::string out(word);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

int Vocab::add(std::string_view word) {
  std::string key = word == kUnkToken ? std::string(word) : normalize(word);
  auto [it, inserted] = index_.emplace(key, static_cast<int>(words_.size()));
  if (inserted) words_.push_back(std::move(key));
  return it->second;
}

int Vocab::lookup(std::string_view word) const {
  auto it = index_.find(normalize(word));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<Example> to_examples(const RawSplit& split, const std::string& language,
                                 const std::string& split_name, const Vocab& vocab,
                                 const Tagset& tagset) {
  std::vector<Example> out;
  out.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    const RawSentence& s = split[i];
    Example ex;
    ex.id = language + "/" + split_name + "/" + std::to_string(i);
    ex.language = language;
    ex.words = s.tokens;
    for (const auto& w : s.tokens) ex.tokens.push_back(vocab.lookup(w));
    for (const auto& l : s.labels) {
      if (!tagset.contains(l))
        throw DataError("label '" + l + "' in " + ex.id + " is not in the tagset");
      ex.gold.push_back(tagset.id(l));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace structkd
