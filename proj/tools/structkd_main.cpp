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


// structkd: train teachers, cache their pseudo-targets, distill a
// multilingual student, evaluate and inspect lattices.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <optional>

#include "structkd/errors.hpp"
#include "structkd/experiment.hpp"
#include "structkd/synthetic.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "experiment JSON");
  if (config_required) opt->required();
  cmd->add_option("--set", c.sets, "override a config value, e.g. student.train.tau=0.5")->take_all();
  cmd->add_option("--seed", c.seed, "seed for teacher and student training");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace structkd;
  CLI::App app{"Structure-level knowledge distillation for CRF taggers"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  Common common;
  std::string language, model, split = "test", gold, pred, input, potentials;
  std::string scheme = "bio";
  int k = 2;
  int token_column = 0;

  auto* teacher = app.add_subcommand("train-teacher", "train one NLL teacher per language");
  add_common(teacher, common, true);
  teacher->add_option("--language", language, "train only this language");

  auto* cache = app.add_subcommand("cache", "run the teachers and write cache.jsonl");
  add_common(cache, common, true);

  auto* distill = app.add_subcommand("distill", "train the student from gold labels and the cache");
  add_common(distill, common, true);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, or compare two CoNLL files");
  add_common(eval, common, false);
  eval->add_option("--model", model, "checkpoint to evaluate on --split of every configured language");
  eval->add_option("--split", split, "train, dev or test")->capture_default_str();
  eval->add_option("--gold", gold, "gold CoNLL file");
  eval->add_option("--pred", pred, "predicted CoNLL file");
  eval->add_option("--scheme", scheme, "bio or raw (file comparison only)")->capture_default_str();

  auto* predict = app.add_subcommand("predict", "tag a CoNLL file");
  add_common(predict, common, false);
  predict->add_option("--model", model, "checkpoint")->required();
  predict->add_option("--input", input, "CoNLL input")->required();
  predict->add_option("--token-column", token_column, "token column")->capture_default_str();

  auto* inspect = app.add_subcommand("inspect-lattice", "print sequence probabilities, top-k, alpha, beta, posteriors");
  inspect->add_option("--potentials", potentials, "potential table JSON")->required();
  inspect->add_option("--k", k, "k-best list size")->capture_default_str();

  auto* sweep = app.add_subcommand("k-sweep", "distill once per k from a single cached max-k list");
  add_common(sweep, common, true);

  SyntheticSpec synth;
  std::string synth_dir;
  auto* make_synth = app.add_subcommand("make-synthetic", "write a toy multilingual task and its config");
  make_synth->add_option("--dir", synth_dir, "target directory")->required();
  make_synth->add_option("--languages", synth.languages)->capture_default_str();
  make_synth->add_option("--train", synth.train_sentences)->capture_default_str();
  make_synth->add_option("--noise", synth.label_noise)->capture_default_str();
  make_synth->add_option("--seed", synth.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("structkd"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  if (inspect->parsed()) {
    try {
      const PotentialTable table = read_potential_table(potentials);
      inspect_lattice(table.lattice, table.tagset, k, std::cout);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }

  if (make_synth->parsed()) {
    try {
      write_synthetic_task(synth_dir, make_synthetic_task(synth));
      std::cout << "wrote " << synth_dir << "/experiment.json\n";
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }

  CLI::App* cmd = app.get_subcommands().front();
  std::optional<ArtifactManifest> manifest;
  try {
    manifest.emplace(common.out, cmd->get_name());
    std::optional<ExperimentConfig> config;
    if (!common.config.empty()) config = ExperimentConfig::load(common.config, common.sets, common.seed);

    if (cmd == teacher) {
      run_train_teacher(*config, *manifest, std::cout,
                        language.empty() ? std::nullopt : std::optional<std::string>(language));
    } else if (cmd == cache) {
      run_cache(*config, *manifest, std::cout);
    } else if (cmd == distill) {
      run_distill(*config, *manifest, std::cout);
    } else if (cmd == eval) {
      if (!gold.empty() || !pred.empty()) {
        if (gold.empty() || pred.empty()) throw ConfigError("eval needs both --gold and --pred");
        run_eval_files(gold, pred, parse_label_scheme(scheme), *manifest, std::cout);
      } else {
        if (model.empty() || !config) throw ConfigError("eval needs --gold/--pred, or --model with --config");
        run_eval_model(*config, model, split, *manifest, std::cout);
      }
    } else if (cmd == predict) {
      run_predict(model, input, token_column, *manifest, std::cout);
    } else if (cmd == sweep) {
      run_k_sweep(*config, *manifest, std::cout);
    }
    manifest->write(true);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (manifest) {
      try {
        manifest->write(false, e.what());
      } catch (const std::exception&) {
      }
    }
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ParseError*>(&e)) return 3;
    return 1;
  }
}
