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


#include "structkd/synthetic.hpp"

#include <json.hpp>

#include <fstream>
#include <random>

#include "structkd/errors.hpp"

namespace structkd {

std::vector<SyntheticLanguage> make_synthetic_task(const SyntheticSpec& spec) {
  if (spec.languages < 1 || spec.vocab_per_language < 1 || spec.labels < 2)
    throw ConfigError("synthetic task needs >= 1 language, >= 1 word and >= 2 labels");
  if (spec.min_length < 1 || spec.max_length < spec.min_length)
    throw ConfigError("bad synthetic sentence length range");
  std::mt19937_64 rng(spec.seed);
  std::vector<SyntheticLanguage> task;
  for (int l = 0; l < spec.languages; ++l) {
    SyntheticLanguage lang;
    lang.language = "l" + std::to_string(l);
    std::vector<std::string> words;
    std::vector<int> tags;
    std::uniform_int_distribution<int> tag_dist(0, spec.labels - 1);
    for (int w = 0; w < spec.vocab_per_language; ++w) {
      words.push_back(lang.language + "w" + std::to_string(w));
      tags.push_back(tag_dist(rng));
      lang.mapping[words.back()] = "T" + std::to_string(tags.back());
    }
    std::uniform_int_distribution<int> word_dist(0, spec.vocab_per_language - 1);
    std::uniform_int_distribution<int> len_dist(spec.min_length, spec.max_length);
    std::uniform_int_distribution<int> other_dist(1, spec.labels - 1);
    std::bernoulli_distribution corrupt(spec.label_noise);
    const auto make_split = [&](int count, bool noisy) {
      RawSplit split;
      for (int s = 0; s < count; ++s) {
        RawSentence sent;
        const int n = len_dist(rng);
        for (int t = 0; t < n; ++t) {
          const int w = word_dist(rng);
          int tag = tags[static_cast<std::size_t>(w)];
          if (noisy && corrupt(rng)) tag = (tag + other_dist(rng)) % spec.labels;
          sent.tokens.push_back(words[static_cast<std::size_t>(w)]);
          sent.labels.push_back("T" + std::to_string(tag));
        }
        split.push_back(std::move(sent));
      }
      return split;
    };
    lang.train = make_split(spec.train_sentences, true);
    lang.dev = make_split(spec.dev_sentences, false);
    lang.test = make_split(spec.test_sentences, false);
    task.push_back(std::move(lang));
  }
  return task;
}

void write_synthetic_task(const std::filesystem::path& dir, const std::vector<SyntheticLanguage>& task) {
  std::filesystem::create_directories(dir);
  nlohmann::json config;
  config["label_scheme"] = "raw";
  config["languages"] = nlohmann::json::array();
  for (const auto& lang : task) {
    write_conll(dir / (lang.language + ".train.conll"), lang.train);
    write_conll(dir / (lang.language + ".dev.conll"), lang.dev);
    write_conll(dir / (lang.language + ".test.conll"), lang.test);
    config["languages"].push_back({{"name", lang.language},
                                   {"train", lang.language + ".train.conll"},
                                   {"dev", lang.language + ".dev.conll"},
                                   {"test", lang.language + ".test.conll"}});
  }
  config["teacher"] = {{"emb_dim", 16}, {"hidden", 16}, {"train", {{"max_epochs", 30}, {"batch_tokens", 20}}}};
  config["student"] = {{"emb_dim", 16},
                       {"hidden", 16},
                       {"train", {{"max_epochs", 30}, {"batch_tokens", 20}, {"kd_kind", "posterior"}, {"tau", 0.5}}}};
  std::ofstream out(dir / "experiment.json");
  if (!out) throw DataError("cannot write " + (dir / "experiment.json").string());
  out << config.dump(2) << '\n';
}

}  // namespace structkd
