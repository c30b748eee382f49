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


#ifndef STRUCTKD_EXPERIMENT_HPP_
#define STRUCTKD_EXPERIMENT_HPP_

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "structkd/corpus.hpp"
#include "structkd/pipeline.hpp"

namespace structkd {

namespace fs = std::filesystem;

struct LanguageSpec {
  std::string name;
  fs::path train, dev, test;
  fs::path teacher;  // optional checkpoint path
};

// One declarative JSON file per experiment. Relative paths resolve against
// the config file's directory.
//
//   {
//     "label_scheme": "bio" | "raw",
//     "columns": {"token": 0, "label": -1},
//     "languages": [{"name": "en", "train": .., "dev": .., "test": .., "teacher": ..}],
//     "teacher": {"emb_dim": 64, "hidden": 64, "train": {<TrainConfig fields>}},
//     "student": {"emb_dim": 64, "hidden": 64, "train": {<TrainConfig fields>}},
//     "cache": "cache.jsonl",
//     "pretrained_embeddings": "vectors.txt",
//     "k_sweep": [1, 2, ..., 10]
//   }
//
// TrainConfig fields: batch_tokens, lr, lr_decay, patience_epochs,
// max_epochs, max_lr_decays, tau, kd_kind ("posterior", "topwk", "none", ...),
// k, seed, clip_norm, input_dropout, dropout_rate, freeze_embeddings, threads.
struct ExperimentConfig {
  fs::path base_dir;
  LabelScheme scheme = LabelScheme::BIO;
  int token_column = 0;
  int label_column = -1;
  std::vector<LanguageSpec> languages;
  ModelConfig teacher_model;
  ModelConfig student_model;
  TrainConfig teacher_train;
  TrainConfig student_train;
  bool student_kd = true;  // false for kd_kind "none" (no-KD baseline)
  fs::path cache;
  fs::path pretrained_embeddings;
  std::vector<int> k_sweep{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  static ExperimentConfig from_json(const nlohmann::json& j, const fs::path& base_dir);
  static ExperimentConfig load(const fs::path& path, const std::vector<std::string>& overrides = {},
                               std::optional<std::uint64_t> seed = std::nullopt);
};

// Applies "a.b.c=value" to a JSON document; value is parsed as JSON when
// possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

struct LanguageSplits {
  std::string language;
  RawSplit train, dev, test;
};

// Raw corpora plus the shared label inventory: one tagset over every split
// of every language, so no label can silently fall out.
struct ExperimentData {
  Tagset tagset;
  std::vector<LanguageSplits> languages;

  // Vocabulary over the training splits (all languages for the student, a
  // single language for a teacher).
  Vocab vocab(const std::vector<std::string>& only = {}) const;
  Corpus corpus(std::size_t language, const Vocab& vocab) const;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);

// Collects written files and writes <out>/manifest.json with their SHA-256.
class ArtifactManifest {
 public:
  ArtifactManifest(fs::path out_dir, std::string command);
  void add(const fs::path& path);
  void write(bool ok, const std::string& message = "") const;
  const fs::path& out_dir() const { return out_dir_; }

 private:
  fs::path out_dir_;
  std::string command_;
  std::vector<fs::path> files_;
};

Checkpoint make_checkpoint(const ModelParams& params, const Tagset& tagset, const Vocab& vocab,
                           Decoder decoder, const std::string& role,
                           const std::vector<std::string>& languages);

struct LoadedModel {
  ModelParams params;
  Tagset tagset;
  Vocab vocab;
  Decoder decoder = Decoder::Crf;
  std::string hash;
};

LoadedModel load_model(const fs::path& checkpoint_path);

// Command implementations behind the CLI. Each prints a human-readable
// report to `report` and registers its outputs with the manifest.
void run_train_teacher(const ExperimentConfig& config, ArtifactManifest& manifest, std::ostream& report,
                       const std::optional<std::string>& only_language = std::nullopt);
void run_cache(const ExperimentConfig& config, ArtifactManifest& manifest, std::ostream& report);
void run_distill(const ExperimentConfig& config, ArtifactManifest& manifest, std::ostream& report);
void run_eval_model(const ExperimentConfig& config, const fs::path& model, const std::string& split,
                    ArtifactManifest& manifest, std::ostream& report);
void run_eval_files(const fs::path& gold, const fs::path& pred, LabelScheme scheme,
                    ArtifactManifest& manifest, std::ostream& report);
void run_predict(const fs::path& model, const fs::path& input, int token_column,
                 ArtifactManifest& manifest, std::ostream& report);
void run_k_sweep(const ExperimentConfig& config, ArtifactManifest& manifest, std::ostream& report);

// Potential table in raw (non-log) form:
//   {"labels": ["F", "T"], "potentials": [[[1, 1]], [[2, "1/2"], ["1/2", 2]], ...]}
// Block 0 is the 1 x V start row; block k > 0 is V x V (prev, cur).
// Entries are numbers or "a/b" fraction strings.
struct PotentialTable {
  Tagset tagset;
  Lattice lattice;
};
PotentialTable read_potential_table(const fs::path& path);

// Prints every sequence probability (when |V|^n is small), the top-k list
// with weights, alpha, beta and posteriors.
void inspect_lattice(const Lattice& lattice, const Tagset& tagset, int k, std::ostream& report);

}  // namespace structkd

#endif  // STRUCTKD_EXPERIMENT_HPP_
