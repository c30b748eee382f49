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


#include "structkd/experiment.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "structkd/errors.hpp"
#include "structkd/inference.hpp"

namespace structkd {

using nlohmann::json;

namespace {

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> known) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

// Returns false when kd_kind is "none".
bool read_train(const json& j, const std::string& where, TrainConfig& c) {
  check_keys(j, where,
             {"batch_tokens", "lr", "lr_decay", "patience_epochs", "max_epochs", "max_lr_decays", "tau",
              "kd_kind", "k", "seed", "clip_norm", "input_dropout", "dropout_rate", "freeze_embeddings",
              "threads"});
  bool kd = true;
  const auto field = [&](const char* key, auto& out) {
    if (j.contains(key)) out = get_as<std::decay_t<decltype(out)>>(j.at(key), where + "." + key);
  };
  field("batch_tokens", c.batch_tokens);
  field("lr", c.lr);
  field("lr_decay", c.lr_decay);
  field("patience_epochs", c.patience_epochs);
  field("max_epochs", c.max_epochs);
  field("max_lr_decays", c.max_lr_decays);
  field("tau", c.tau);
  field("seed", c.seed);
  field("clip_norm", c.clip_norm);
  field("input_dropout", c.input_dropout);
  field("dropout_rate", c.dropout_rate);
  field("freeze_embeddings", c.freeze_embeddings);
  field("threads", c.threads);
  if (j.contains("kd_kind")) {
    auto text = get_as<std::string>(j.at("kd_kind"), where + ".kd_kind");
    // "topwk" with a separate "k" field is accepted as well as "topwk:5".
    if (j.contains("k") && text.find(':') == std::string::npos && text != "none")
      text += ":" + std::to_string(get_as<int>(j.at("k"), where + ".k"));
    if (text == "none") {
      kd = false;
    } else {
      try {
        c.kd_kind = KDLossKind::parse(text);
      } catch (const std::exception& e) {
        throw ConfigError(where + ".kd_kind: " + e.what());
      }
    }
  }
  if (j.contains("k")) {
    const int k = get_as<int>(j.at("k"), where + ".k");
    if (c.kd_kind.uses_kbest()) c.kd_kind = KDLossKind(c.kd_kind.variant, k);
  }
  c.validate();
  return kd;
}

ModelConfig read_model(const json& j, const std::string& where, TrainConfig& train, bool* kd) {
  check_keys(j, where, {"emb_dim", "hidden", "train"});
  ModelConfig m;
  if (j.contains("emb_dim")) m.emb_dim = get_as<int>(j.at("emb_dim"), where + ".emb_dim");
  if (j.contains("hidden")) m.hidden = get_as<int>(j.at("hidden"), where + ".hidden");
  if (m.emb_dim < 1 || m.hidden < 1) throw ConfigError(where + ": emb_dim and hidden must be positive");
  const bool on = j.contains("train") ? read_train(j.at("train"), where + ".train", train) : true;
  if (kd) *kd = on;
  return m;
}

class EventLog {
 public:
  EventLog(const fs::path& path, ArtifactManifest& manifest) : out_(path) {
    if (!out_) throw DataError("cannot write " + path.string());
    manifest.add(path);
  }
  EventSink sink() {
    return [this](const PipelineEvent& e) {
      out_ << R"({"kind":)" << json(e.kind).dump() << R"(,"epoch":)" << e.epoch << R"(,"step":)" << e.step;
      if (e.kind == "epoch") out_ << R"(,"log":)" << e.detail;
      else out_ << R"(,"detail":)" << json(e.detail).dump();
      out_ << "}\n";
      if (e.kind == "epoch") spdlog::info("epoch {}", e.detail);
    };
  }

 private:
  std::ofstream out_;
};

ModelShape shape_for(const ModelConfig& m, const Vocab& vocab, const Tagset& tagset) {
  return {vocab.size(), m.emb_dim, m.hidden, tagset.size()};
}

std::optional<ModelParams> initial_params(const ExperimentConfig& config, const ModelShape& shape,
                                          const Vocab& vocab, std::uint64_t seed) {
  if (config.pretrained_embeddings.empty()) return std::nullopt;
  ModelParams params = ModelParams::init(shape, seed);
  const int found = load_pretrained_embeddings(config.pretrained_embeddings, vocab.words(), params);
  spdlog::info("pretrained embeddings: {} of {} words found", found, vocab.size());
  return params;
}

fs::path teacher_path(const LanguageSpec& lang, const fs::path& out) {
  return lang.teacher.empty() ? out / "teachers" / (lang.name + ".ckpt") : lang.teacher;
}

fs::path cache_path(const ExperimentConfig& config, const fs::path& out) {
  return config.cache.empty() ? out / "cache.jsonl" : config.cache;
}

std::map<std::string, TeacherModel> load_teachers(const ExperimentConfig& config, const fs::path& out) {
  std::map<std::string, TeacherModel> teachers;
  for (const auto& lang : config.languages) {
    const fs::path path = teacher_path(lang, out);
    if (!fs::exists(path))
      throw ConfigError("no teacher checkpoint for '" + lang.name + "' at " + path.string() +
                        " (run train-teacher first)");
    LoadedModel m = load_model(path);
    teachers[lang.name] = TeacherModel{std::move(m.params), m.decoder, std::move(m.tagset), std::move(m.vocab),
                                       std::move(m.hash)};
  }
  return teachers;
}

std::vector<Corpus> student_corpora(const ExperimentData& data, const Vocab& vocab) {
  std::vector<Corpus> corpora;
  for (std::size_t l = 0; l < data.languages.size(); ++l) corpora.push_back(data.corpus(l, vocab));
  return corpora;
}

std::vector<LanguageData> language_data(const std::vector<Corpus>& corpora) {
  std::vector<LanguageData> out;
  for (const auto& c : corpora) out.push_back({c.language, c.train, c.dev});
  return out;
}

std::string percent(double x) { return fmt::format("{:.2f}", 100.0 * x); }

// Metric lines for one language (or the macro average) into the report.
struct MetricReport {
  std::vector<std::pair<std::string, std::string>> lines;
  json summary = json::object();

  void add(const std::string& scope, const std::string& name, double value) {
    lines.emplace_back(scope + "." + name, percent(value));
    summary[scope][name] = value;
  }

  void write(const fs::path& out, ArtifactManifest& manifest, std::ostream& report) const {
    std::ofstream txt(out / "metrics.txt");
    for (const auto& [k, v] : lines) {
      txt << k << ' ' << v << '\n';
      report << k << ' ' << v << '\n';
    }
    txt.close();
    manifest.add(out / "metrics.txt");
    std::ofstream js(out / "metrics.json");
    js << summary.dump(2) << '\n';
    js.close();
    manifest.add(out / "metrics.json");
  }
};

// Adds precision/recall/f1 (BIO) or accuracy (raw); returns the task metric.
double add_metrics(MetricReport& rep, const std::string& scope, LabelScheme scheme,
                   const std::vector<std::vector<std::string>>& gold,
                   const std::vector<std::vector<std::string>>& pred) {
  if (scheme == LabelScheme::BIO) {
    std::vector<SpanSet> g, p;
    for (const auto& s : gold) g.push_back(decode_spans(s));
    for (const auto& s : pred) p.push_back(decode_spans(s));
    const PRF prf = span_f1(g, p);
    rep.add(scope, "precision", prf.precision);
    rep.add(scope, "recall", prf.recall);
    rep.add(scope, "f1", prf.f1);
    return prf.f1;
  }
  long correct = 0, total = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    for (std::size_t t = 0; t < gold[s].size(); ++t) correct += gold[s][t] == pred[s][t];
    total += static_cast<long>(gold[s].size());
  }
  const double acc = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  rep.add(scope, "accuracy", acc);
  return acc;
}

std::vector<std::string> names(const LabelSequence& labels, const Tagset& tagset) {
  std::vector<std::string> out;
  for (int y : labels) out.push_back(tagset.name(y));
  return out;
}

double parse_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) throw ConfigError("potential entries must be numbers or \"a/b\" strings");
  const std::string s = j.get<std::string>();
  try {
    const auto slash = s.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    }
    const std::string num = s.substr(0, slash), den = s.substr(slash + 1);
    const double a = std::stod(num, &used);
    if (used != num.size()) throw std::invalid_argument(s);
    const double b = std::stod(den, &used);
    if (used != den.size()) throw std::invalid_argument(s);
    return a / b;
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse potential '" + s + "'");
  }
}

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ConfigError("empty segment in override key '" + key + "'");
    const bool numeric = std::all_of(part.begin(), part.end(), [](char c) { return c >= '0' && c <= '9'; });
    if (numeric && node->is_array()) {
      const auto idx = std::stoul(part);
      if (idx >= node->size()) throw ConfigError("override index out of range in '" + key + "'");
      node = &(*node)[idx];
    } else {
      if (!node->is_object() && !node->is_null()) throw ConfigError("override path '" + key + "' is not an object");
      node = &(*node)[part];
    }
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  *node = std::move(value);
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  check_keys(j, "config",
             {"label_scheme", "columns", "languages", "teacher", "student", "cache", "pretrained_embeddings",
              "k_sweep"});
  ExperimentConfig c;
  c.base_dir = base_dir;
  // Teachers are trained by NLL only; kd_kind there just picks the decoder.
  c.teacher_train.kd_kind = KDLossKind(KDVariant::Posterior);
  if (j.contains("label_scheme")) c.scheme = parse_label_scheme(get_as<std::string>(j.at("label_scheme"), "label_scheme"));
  if (j.contains("columns")) {
    const json& cols = j.at("columns");
    check_keys(cols, "columns", {"token", "label"});
    if (cols.contains("token")) c.token_column = get_as<int>(cols.at("token"), "columns.token");
    if (cols.contains("label")) c.label_column = get_as<int>(cols.at("label"), "columns.label");
  }
  if (!j.contains("languages") || !j.at("languages").is_array() || j.at("languages").empty())
    throw ConfigError("config needs a non-empty 'languages' array");
  for (const auto& l : j.at("languages")) {
    check_keys(l, "languages[]", {"name", "train", "dev", "test", "teacher"});
    LanguageSpec spec;
    if (!l.contains("name") || !l.contains("train"))
      throw ConfigError("each language needs at least 'name' and 'train'");
    spec.name = get_as<std::string>(l.at("name"), "languages[].name");
    const auto path = [&](const char* key) {
      return l.contains(key) ? resolve(base_dir, get_as<std::string>(l.at(key), std::string("languages[].") + key))
                             : fs::path();
    };
    spec.train = path("train");
    spec.dev = path("dev");
    spec.test = path("test");
    spec.teacher = path("teacher");
    for (const auto& other : c.languages)
      if (other.name == spec.name) throw ConfigError("duplicate language '" + spec.name + "'");
    c.languages.push_back(std::move(spec));
  }
  if (j.contains("teacher")) c.teacher_model = read_model(j.at("teacher"), "teacher", c.teacher_train, nullptr);
  if (j.contains("student")) c.student_model = read_model(j.at("student"), "student", c.student_train, &c.student_kd);
  if (j.contains("cache")) c.cache = resolve(base_dir, get_as<std::string>(j.at("cache"), "cache"));
  if (j.contains("pretrained_embeddings"))
    c.pretrained_embeddings = resolve(base_dir, get_as<std::string>(j.at("pretrained_embeddings"), "pretrained_embeddings"));
  if (j.contains("k_sweep")) {
    c.k_sweep = get_as<std::vector<int>>(j.at("k_sweep"), "k_sweep");
    if (c.k_sweep.empty() || *std::min_element(c.k_sweep.begin(), c.k_sweep.end()) < 1)
      throw ConfigError("k_sweep needs positive k values");
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path, const std::vector<std::string>& overrides,
                                        std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) {
    for (const char* role : {"teacher", "student"}) doc[role]["train"]["seed"] = *seed;
  }
  return from_json(doc, path.parent_path());
}

Vocab ExperimentData::vocab(const std::vector<std::string>& only) const {
  Vocab v;
  for (const auto& lang : languages) {
    if (!only.empty() && std::find(only.begin(), only.end(), lang.language) == only.end()) continue;
    for (const auto& s : lang.train)
      for (const auto& w : s.tokens) v.add(w);
  }
  return v;
}

Corpus ExperimentData::corpus(std::size_t language, const Vocab& vocab) const {
  const LanguageSplits& l = languages.at(language);
  Corpus c;
  c.language = l.language;
  c.tagset = tagset;
  c.train = to_examples(l.train, l.language, "train", vocab, tagset);
  c.dev = to_examples(l.dev, l.language, "dev", vocab, tagset);
  c.test = to_examples(l.test, l.language, "test", vocab, tagset);
  return c;
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  ExperimentData data;
  for (const auto& spec : config.languages) {
    LanguageSplits l;
    l.language = spec.name;
    l.train = read_conll(spec.train, config.token_column, config.label_column);
    if (!spec.dev.empty()) l.dev = read_conll(spec.dev, config.token_column, config.label_column);
    if (!spec.test.empty()) l.test = read_conll(spec.test, config.token_column, config.label_column);
    if (l.train.empty()) throw DataError("training split for '" + spec.name + "' is empty");
    data.languages.push_back(std::move(l));
  }
  std::vector<const RawSplit*> splits;
  for (const auto& l : data.languages) splits.insert(splits.end(), {&l.train, &l.dev, &l.test});
  data.tagset = build_tagset(splits);
  return data;
}

ArtifactManifest::ArtifactManifest(fs::path out_dir, std::string command)
    : out_dir_(std::move(out_dir)), command_(std::move(command)) {
  fs::create_directories(out_dir_);
}

void ArtifactManifest::add(const fs::path& path) {
  if (std::find(files_.begin(), files_.end(), path) == files_.end()) files_.push_back(path);
}

void ArtifactManifest::write(bool ok, const std::string& message) const {
  // One entry per command; earlier commands writing to the same directory
  // keep theirs.
  const fs::path path = out_dir_ / "manifest.json";
  json doc = json::object();
  if (std::ifstream prev(path); prev) {
    doc = json::parse(prev, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) doc = json::object();
  }
  json m;
  m["status"] = ok ? "ok" : "failed";
  if (!message.empty()) m["message"] = message;
  m["artifacts"] = json::array();
  for (const auto& f : files_) {
    json a;
    a["path"] = fs::relative(f, out_dir_).generic_string();
    a["complete"] = ok;
    if (fs::exists(f)) a["sha256"] = sha256_file(f);
    m["artifacts"].push_back(std::move(a));
  }
  doc["commands"][command_] = std::move(m);
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
}

Checkpoint make_checkpoint(const ModelParams& params, const Tagset& tagset, const Vocab& vocab, Decoder decoder,
                           const std::string& role, const std::vector<std::string>& languages) {
  Checkpoint c;
  c.params = params;
  c.strings["tagset"] = tagset.labels();
  c.strings["vocab"] = vocab.words();
  c.strings["decoder"] = {std::string(decoder_name(decoder))};
  c.strings["role"] = {role};
  c.strings["languages"] = languages;
  return c;
}

LoadedModel load_model(const fs::path& checkpoint_path) {
  Checkpoint c = read_checkpoint(checkpoint_path);
  for (const char* key : {"tagset", "vocab", "decoder"})
    if (!c.strings.count(key)) throw DataError(checkpoint_path.string() + " lacks '" + key + "' metadata");
  LoadedModel m;
  m.tagset = Tagset(c.strings.at("tagset"));
  m.vocab = Vocab(c.strings.at("vocab"));
  m.decoder = parse_decoder(c.strings.at("decoder").at(0));
  const ModelShape want{m.vocab.size(), static_cast<int>(c.params.embeddings.cols()),
                        static_cast<int>(c.params.forward.w_rec.cols()), m.tagset.size()};
  if (c.params.shape() != want) throw DataError(checkpoint_path.string() + ": metadata does not match tensor shapes");
  m.params = std::move(c.params);
  m.hash = sha256_file(checkpoint_path);
  return m;
}

void run_train_teacher(const ExperimentConfig& config, ArtifactManifest& manifest, std::ostream& report,
                       const std::optional<std::string>& only_language) {
  const ExperimentData data = load_experiment_data(config);
  const fs::path dir = manifest.out_dir() / "teachers";
  fs::create_directories(dir);
  bool any = false;
  for (std::size_t l = 0; l < data.languages.size(); ++l) {
    const std::string& name = data.languages[l].language;
    if (only_language && *only_language != name) continue;
    any = true;
    const Vocab vocab = data.vocab({name});
    const Corpus corpus = data.corpus(l, vocab);
    TrainSetup setup;
    setup.shape = shape_for(config.teacher_model, vocab, data.tagset);
    setup.decoder = Decoder::Crf;
    setup.scheme = config.scheme;
    setup.tagset = data.tagset;
    setup.languages = {{name, corpus.train, corpus.dev}};
    setup.init = initial_params(config, setup.shape, vocab, config.teacher_train.seed);
    EventLog events(dir / (name + ".events.jsonl"), manifest);
    const TrainResult r = train(setup, config.teacher_train, events.sink());
    const fs::path ckpt = dir / (name + ".ckpt");
    write_checkpoint(ckpt, make_checkpoint(r.best, data.tagset, vocab, Decoder::Crf, "teacher", {name}));
    manifest.add(ckpt);
    report << fmt::format("teacher {} best_epoch {} dev {}\n", name, r.best_epoch, percent(r.best_dev));
  }
  if (!any) throw ConfigError("language '" + only_language.value_or("") + "' is not in the config");
}

void run_cache(const ExperimentConfig& config, ArtifactManifest& manifest, std::ostream& report) {
  if (!config.student_kd) throw ConfigError("student.train.kd_kind is 'none'; nothing to cache");
  const ExperimentData data = load_experiment_data(config);
  const auto teachers = load_teachers(config, manifest.out_dir());
  const Vocab vocab = data.vocab();
  EventLog events(manifest.out_dir() / "cache.events.jsonl", manifest);
  const auto records = cache_teachers(teachers, student_corpora(data, vocab), data.tagset,
                                      config.student_train.kd_kind, 0, thread_cap(config.student_train.threads),
                                      events.sink());
  const fs::path path = manifest.out_dir() / "cache.jsonl";
  write_teacher_cache(path, records);
  manifest.add(path);
  report << fmt::format("cached {} records ({})\n", records.size(), config.student_train.kd_kind.to_string());
}

void run_distill(const ExperimentConfig& config, ArtifactManifest& manifest, std::ostream& report) {
  const ExperimentData data = load_experiment_data(config);
  const Vocab vocab = data.vocab();
  const std::vector<Corpus> corpora = student_corpora(data, vocab);

  std::map<std::string, TeacherTargets> cache;
  TrainSetup setup;
  setup.shape = shape_for(config.student_model, vocab, data.tagset);
  setup.scheme = config.scheme;
  setup.tagset = data.tagset;
  setup.languages = language_data(corpora);
  setup.init = initial_params(config, setup.shape, vocab, config.student_train.seed);
  setup.decoder = Decoder::Crf;
  if (config.student_kd) {
    const fs::path path = cache_path(config, manifest.out_dir());
    if (!fs::exists(path)) throw ConfigError("no teacher cache at " + path.string() + " (run cache first)");
    cache = index_cache(read_teacher_cache(path));
    setup.cache = &cache;
    setup.kd = config.student_train.kd_kind;
    setup.decoder = decoder_for(config.student_train.kd_kind);
    setup.initial_lambda = 1.0;
  }
  EventLog events(manifest.out_dir() / "distill.events.jsonl", manifest);
  const TrainResult r = train(setup, config.student_train, events.sink());
  std::vector<std::string> langs;
  for (const auto& c : corpora) langs.push_back(c.language);
  const fs::path ckpt = manifest.out_dir() / "student.ckpt";
  write_checkpoint(ckpt, make_checkpoint(r.best, data.tagset, vocab, setup.decoder, "student", langs));
  manifest.add(ckpt);
  report << fmt::format("student {} best_epoch {} dev_macro {}\n",
                        config.student_kd ? config.student_train.kd_kind.to_string() : "none", r.best_epoch,
                        percent(r.best_dev));
}

void run_eval_model(const ExperimentConfig& config, const fs::path& model, const std::string& split,
                    ArtifactManifest& manifest, std::ostream& report) {
  if (split != "train" && split != "dev" && split != "test") throw ConfigError("unknown split '" + split + "'");
  const LoadedModel m = load_model(model);
  const ExperimentData data = load_experiment_data(config);
  const auto ckpt_langs = read_checkpoint(model).strings["languages"];
  MetricReport rep;
  double macro = 0.0;
  int count = 0;
  for (const auto& lang : data.languages) {
    if (!ckpt_langs.empty() && std::find(ckpt_langs.begin(), ckpt_langs.end(), lang.language) == ckpt_langs.end())
      continue;
    const RawSplit& raw = split == "train" ? lang.train : split == "dev" ? lang.dev : lang.test;
    const auto examples = to_examples(raw, lang.language, split, m.vocab, m.tagset);
    std::vector<std::vector<std::string>> gold, pred;
    for (const auto& ex : examples) {
      gold.push_back(names(ex.gold, m.tagset));
      pred.push_back(names(predict(m.params, m.decoder, ex.tokens), m.tagset));
    }
    macro += add_metrics(rep, lang.language, config.scheme, gold, pred);
    ++count;
  }
  if (count == 0) throw ConfigError("checkpoint covers none of the configured languages");
  rep.add("macro", config.scheme == LabelScheme::BIO ? "f1" : "accuracy", macro / count);
  rep.write(manifest.out_dir(), manifest, report);
}

void run_eval_files(const fs::path& gold_path, const fs::path& pred_path, LabelScheme scheme,
                    ArtifactManifest& manifest, std::ostream& report) {
  const RawSplit gold = read_conll(gold_path);
  const RawSplit pred = read_conll(pred_path);
  if (gold.size() != pred.size())
    throw DataError(fmt::format("gold has {} sentences, predictions have {}", gold.size(), pred.size()));
  std::vector<std::vector<std::string>> g, p;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].tokens.size() != pred[s].tokens.size())
      throw DataError(fmt::format("sentence {} has {} gold tokens but {} predicted", s + 1, gold[s].tokens.size(),
                                  pred[s].tokens.size()));
    g.push_back(gold[s].labels);
    p.push_back(pred[s].labels);
  }
  MetricReport rep;
  add_metrics(rep, "all", scheme, g, p);
  rep.write(manifest.out_dir(), manifest, report);
}

void run_predict(const fs::path& model, const fs::path& input, int token_column, ArtifactManifest& manifest,
                 std::ostream& report) {
  const LoadedModel m = load_model(model);
  RawSplit split = read_conll(input, token_column, token_column);
  for (auto& s : split) {
    std::vector<int> ids;
    for (const auto& w : s.tokens) ids.push_back(m.vocab.lookup(w));
    s.labels = names(predict(m.params, m.decoder, ids), m.tagset);
  }
  const fs::path path = manifest.out_dir() / "predictions.conll";
  write_conll(path, split);
  manifest.add(path);
  report << fmt::format("predicted {} sentences -> {}\n", split.size(), path.string());
}

void run_k_sweep(const ExperimentConfig& config, ArtifactManifest& manifest, std::ostream& report) {
  if (!config.student_kd) throw ConfigError("k-sweep needs a k-best kd_kind");
  const KDVariant variant =
      config.student_train.kd_kind.uses_kbest() ? config.student_train.kd_kind.variant : KDVariant::TopWK;
  const int max_k = *std::max_element(config.k_sweep.begin(), config.k_sweep.end());
  const ExperimentData data = load_experiment_data(config);
  const auto teachers = load_teachers(config, manifest.out_dir());
  const Vocab vocab = data.vocab();
  const std::vector<Corpus> corpora = student_corpora(data, vocab);
  const int threads = thread_cap(config.student_train.threads);

  // The largest list is cached once; losses truncate it to each k.
  EventLog events(manifest.out_dir() / "k_sweep.events.jsonl", manifest);
  const auto records = cache_teachers(teachers, corpora, data.tagset, KDLossKind(variant, max_k), max_k, threads,
                                      events.sink());
  const auto cache = index_cache(records);

  const fs::path table = manifest.out_dir() / "k_sweep.tsv";
  std::ofstream out(table);
  out << "k\tbest_epoch\tdev_macro\ttest_macro\n";
  for (int k : config.k_sweep) {
    TrainConfig tc = config.student_train;
    tc.kd_kind = KDLossKind(variant, k);
    TrainSetup setup;
    setup.shape = shape_for(config.student_model, vocab, data.tagset);
    setup.decoder = Decoder::Crf;
    setup.scheme = config.scheme;
    setup.tagset = data.tagset;
    setup.languages = language_data(corpora);
    setup.cache = &cache;
    setup.kd = tc.kd_kind;
    setup.initial_lambda = 1.0;
    setup.init = initial_params(config, setup.shape, vocab, tc.seed);
    const TrainResult r = train(setup, tc, events.sink());
    double test = 0.0;
    for (const auto& c : corpora) test += evaluate(r.best, Decoder::Crf, c.test, config.scheme, data.tagset);
    test /= static_cast<double>(corpora.size());
    const std::string row = fmt::format("{}\t{}\t{:.6f}\t{:.6f}", k, r.best_epoch, r.best_dev, test);
    out << row << '\n';
    report << row << '\n';
  }
  out.close();
  manifest.add(table);
}

PotentialTable read_potential_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  check_keys(j, "potential table", {"labels", "potentials"});
  if (!j.contains("labels") || !j.contains("potentials")) throw ConfigError("potential table needs labels and potentials");
  Tagset tagset(get_as<std::vector<std::string>>(j.at("labels"), "labels"));
  const json& blocks = j.at("potentials");
  if (!blocks.is_array() || blocks.empty()) throw ConfigError("potentials must be a non-empty array");
  std::vector<Matrix> raw;
  for (const auto& block : blocks) {
    if (!block.is_array() || block.empty() || !block[0].is_array()) throw ConfigError("each potential block is a matrix");
    Matrix m(static_cast<Eigen::Index>(block.size()), static_cast<Eigen::Index>(block[0].size()));
    for (std::size_t r = 0; r < block.size(); ++r) {
      if (!block[r].is_array() || block[r].size() != block[0].size()) throw ConfigError("ragged potential block");
      for (std::size_t c = 0; c < block[r].size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = parse_number(block[r][c]);
    }
    raw.push_back(std::move(m));
  }
  if (raw[0].cols() != tagset.size()) throw ConfigError("potential columns do not match the label count");
  return {tagset, Lattice::from_potentials(raw)};
}

void inspect_lattice(const Lattice& lattice, const Tagset& tagset, int k, std::ostream& report) {
  const int n = lattice.length();
  const int V = lattice.num_labels();
  const double log_z = log_partition(lattice);
  const auto seq_names = [&](const LabelSequence& y) {
    std::string s;
    for (int t = 0; t < n; ++t) s += (t ? " " : "") + tagset.name(y[static_cast<std::size_t>(t)]);
    return s;
  };
  report << fmt::format("Z {:.6f}\nlogZ {:.6f}\n", std::exp(log_z), log_z);

  const double total = std::pow(static_cast<double>(V), n);
  if (total <= 4096) {
    report << "sequences\n";
    LabelSequence y(static_cast<std::size_t>(n), 0);
    for (long i = 0; i < static_cast<long>(total); ++i) {
      long rest = i;
      for (int t = n - 1; t >= 0; --t) {
        y[static_cast<std::size_t>(t)] = static_cast<int>(rest % V);
        rest /= V;
      }
      report << fmt::format("  {}  {:.3f}\n", seq_names(y), std::exp(sequence_log_prob(lattice, y)));
    }
  } else {
    report << fmt::format("sequences: {:.0f} (not enumerated)\n", total);
  }

  if (k > 0) {
    const KBestList list = kbest_viterbi(lattice, k);
    report << fmt::format("top-{}\n", k);
    for (std::size_t r = 0; r < list.size(); ++r)
      report << fmt::format("  {}  {}  p {:.3f}  weight {:.3f}\n", r + 1, seq_names(list[r].labels),
                            std::exp(list[r].log_score - log_z), list[r].weight);
  }

  const Matrix alpha = forward_scores(lattice);
  const Matrix beta = backward_scores(lattice);
  const Matrix q = posteriors(lattice);
  const auto table = [&](const char* title, const Matrix& m, bool exp_space) {
    report << title;
    for (int t = 0; t < n; ++t) report << fmt::format("  {:>8}", "y" + std::to_string(t + 1));
    report << '\n';
    for (int y = 0; y < V; ++y) {
      report << fmt::format("  {:<6}", tagset.name(y));
      for (int t = 0; t < n; ++t) {
        const double v = exp_space ? std::exp(m(t, y)) : m(t, y);
        // Half away from zero, as tables are usually printed (8.125 -> 8.13);
        // the nudge absorbs log-space round-off just below an exact half.
        report << fmt::format("{:>10.2f}", std::round(v * 100.0 * (1.0 + 1e-12)) / 100.0);
      }
      report << '\n';
    }
  };
  table("alpha\n        ", alpha, true);
  table("beta\n        ", beta, true);
  table("posterior\n        ", q, false);
}

}  // namespace structkd
