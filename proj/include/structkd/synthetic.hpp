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


#ifndef STRUCTKD_SYNTHETIC_HPP_
#define STRUCTKD_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "structkd/corpus.hpp"

namespace structkd {

// Multilingual toy tagging task: each language has its own vocabulary and
// a fixed random word -> tag map; training labels are corrupted with
// probability label_noise (replaced by a different tag), dev/test are clean.
struct SyntheticSpec {
  int languages = 2;
  int vocab_per_language = 30;
  int labels = 5;
  int train_sentences = 100;
  int dev_sentences = 50;
  int test_sentences = 50;
  int min_length = 3;
  int max_length = 8;
  double label_noise = 0.1;
  std::uint64_t seed = 1;
};

struct SyntheticLanguage {
  std::string language;
  RawSplit train, dev, test;
  std::map<std::string, std::string> mapping;
};

std::vector<SyntheticLanguage> make_synthetic_task(const SyntheticSpec& spec);

// Writes <dir>/<lang>.{train,dev,test}.conll and <dir>/experiment.json, a
// ready-to-run config for the generated corpora.
void write_synthetic_task(const std::filesystem::path& dir, const std::vector<SyntheticLanguage>& task);

}  // namespace structkd

#endif  // STRUCTKD_SYNTHETIC_HPP_
