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


// Synthetic multilingual task resolved into ids, shared by the pipeline
// tests and the acceptance suite.

#ifndef STRUCTKD_TESTS_TOY_TASK_HPP_
#define STRUCTKD_TESTS_TOY_TASK_HPP_

#include <map>
#include <string>
#include <vector>

#include "structkd/pipeline.hpp"
#include "structkd/synthetic.hpp"

namespace structkd::testing {

struct Toy {
  Tagset tagset;
  Vocab vocab;  // joint, over every training split
  std::vector<Vocab> own_vocabs;
  std::vector<Corpus> corpora;
  std::vector<LanguageData> languages;
};

inline Toy make_toy(const SyntheticSpec& spec) {
  const auto task = make_synthetic_task(spec);
  std::vector<const RawSplit*> splits;
  for (const auto& l : task) splits.insert(splits.end(), {&l.train, &l.dev, &l.test});
  Toy toy;
  toy.tagset = build_tagset(splits);
  for (const auto& l : task) {
    Vocab own;
    for (const auto& s : l.train)
      for (const auto& w : s.tokens) {
        toy.vocab.add(w);
        own.add(w);
      }
    toy.own_vocabs.push_back(std::move(own));
  }
  for (const auto& l : task) {
    Corpus c;
    c.language = l.language;
    c.tagset = toy.tagset;
    c.train = to_examples(l.train, l.language, "train", toy.vocab, toy.tagset);
    c.dev = to_examples(l.dev, l.language, "dev", toy.vocab, toy.tagset);
    c.test = to_examples(l.test, l.language, "test", toy.vocab, toy.tagset);
    toy.languages.push_back({c.language, c.train, c.dev});
    toy.corpora.push_back(std::move(c));
  }
  return toy;
}

// A language's data re-resolved against its own (teacher) vocabulary.
inline LanguageData own_language_data(const Toy& toy, std::size_t l) {
  const auto relabel = [&](const std::vector<Example>& in) {
    std::vector<Example> out = in;
    for (auto& ex : out) {
      ex.tokens.clear();
      for (const auto& w : ex.words) ex.tokens.push_back(toy.own_vocabs[l].lookup(w));
    }
    return out;
  };
  return {toy.corpora[l].language, relabel(toy.corpora[l].train), relabel(toy.corpora[l].dev)};
}

}  // namespace structkd::testing

#endif  // STRUCTKD_TESTS_TOY_TASK_HPP_
