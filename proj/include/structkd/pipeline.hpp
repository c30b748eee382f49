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


#ifndef STRUCTKD_PIPELINE_HPP_
#define STRUCTKD_PIPELINE_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "structkd/checkpoint.hpp"
#include "structkd/corpus.hpp"
#include "structkd/encoder.hpp"
#include "structkd/losses.hpp"
#include "structkd/metrics.hpp"
#include "structkd/teacher_cache.hpp"

namespace structkd {

// CRF models decode with viterbi; the softmax variant decodes each token
// independently and ignores transitions.
enum class Decoder { Crf, Softmax };

std::string_view decoder_name(Decoder d);
Decoder parse_decoder(std::string_view text);

// Token KD is defined for the softmax model variant; every other kind needs
// CRF lattices.
inline Decoder decoder_for(const KDLossKind& kind) {
  return kind.variant == KDVariant::Token ? Decoder::Softmax : Decoder::Crf;
}

struct ModelConfig {
  int emb_dim = 64;
  int hidden = 64;  // per direction
};

struct TrainConfig {
  int batch_tokens = 2000;
  double lr = 0.1;
  double lr_decay = 0.5;
  int patience_epochs = 10;
  int max_epochs = 100;
  int max_lr_decays = 3;  // stop once patience runs out after this many decays
  double tau = 1.0;
  KDLossKind kd_kind{KDVariant::Posterior};
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  bool input_dropout = false;
  double dropout_rate = 0.5;
  bool freeze_embeddings = false;
  int threads = 1;

  void validate() const;
};

// A language's labelled data; ids are resolved against the vocabulary and
// tagset of the model being trained.
struct LanguageData {
  std::string language;
  std::vector<Example> train;
  std::vector<Example> dev;
};

// Structured events emitted while training, in order. "cache_record",
// "cache_complete", "step" (one per SGD update), "epoch", "lr_decay", "stop".
struct PipelineEvent {
  std::string kind;
  int epoch = 0;
  long step = 0;
  std::string detail;
};

using EventSink = std::function<void(const PipelineEvent&)>;

struct EpochLog {
  int epoch = 0;
  double lambda = 0.0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_kd = 0.0;
  double train_nll = 0.0;
  std::map<std::string, double> dev_per_language;
  double dev_macro = 0.0;
  bool lr_decayed = false;
};

// {"epoch":..,"lambda":..,"lr":..,"train_loss":..,"dev_metric_per_language":{..},"dev_macro":..}
std::string to_json_line(const EpochLog& log);

struct TrainResult {
  ModelParams best;
  ModelParams last;
  int best_epoch = 0;
  double best_dev = 0.0;
  std::vector<EpochLog> log;
};

// Sentences shuffled by rng, then greedily packed in order so each batch's
// token count stays within budget. A sentence longer than the budget is
// emitted alone with a warning. Returns indices into lengths.
std::vector<std::vector<std::size_t>> batch_by_tokens(std::span<const int> lengths, int batch_tokens,
                                                      std::mt19937_64& rng);
std::vector<TokenBatch> batch_by_tokens(const std::vector<Example>& corpus, int batch_tokens,
                                        std::uint64_t seed);

struct Objective {
  Decoder decoder = Decoder::Crf;
  std::optional<KDLossKind> kd;  // empty: pure NLL
  double lambda = 0.0;
};

struct SentenceLoss {
  double total = 0.0;
  double kd = 0.0;
  double nll = 0.0;
};

// L = lambda * L_KD + (1 - lambda) * L_NLL for one sentence. When grads is
// non-null the exact parameter gradient of L is accumulated into it.
SentenceLoss sentence_loss_and_grad(const ModelParams& params, const Example& example,
                                    const TeacherTargets* targets, const Objective& objective,
                                    ModelParams* grads, const Matrix& input_mask = Matrix());

LabelSequence predict(const ModelParams& params, Decoder decoder, std::span<const int> tokens);

// Task metric in [0, 1] over a split.
double evaluate(const ModelParams& params, Decoder decoder, const std::vector<Example>& examples,
                LabelScheme scheme, const Tagset& tagset);

struct TrainSetup {
  ModelShape shape;
  Decoder decoder = Decoder::Crf;
  LabelScheme scheme = LabelScheme::BIO;
  Tagset tagset;
  std::vector<LanguageData> languages;
  // Only the student uses these.
  const std::map<std::string, TeacherTargets>* cache = nullptr;
  std::optional<KDLossKind> kd;
  double initial_lambda = 0.0;
  // Optional starting point (e.g. pretrained embeddings); otherwise seeded init.
  std::optional<ModelParams> init;
  // Resuming mid-run: epoch numbering (and so batch order) continues from
  // first_epoch, with the learning rate in effect at that point.
  int first_epoch = 1;
  std::optional<double> initial_lr;
};

// Shared SGD loop: seeded init, token-budget batches from the merged
// languages, per-epoch lambda annealing, plateau lr decay, gradient
// clipping, best-dev checkpoint.
TrainResult train(const TrainSetup& setup, const TrainConfig& config, const EventSink& sink = {});

// Plain NLL training of a monolingual teacher (lambda fixed at 0).
TrainResult train_teacher(const LanguageData& data, const ModelShape& shape, const Tagset& tagset,
                          LabelScheme scheme, const TrainConfig& config, const EventSink& sink = {});

struct TeacherModel {
  ModelParams params;
  Decoder decoder = Decoder::Crf;
  Tagset tagset;
  Vocab vocab;  // the teacher's own vocabulary
  std::string hash;
};

// Runs each language's teacher over its training sentences. Records come
// back in input order (languages as given, sentences in order). k for the
// k-best list is kd_kind.k unless cache_k overrides it (k-sweeps cache the
// largest k once).
std::vector<TeacherCacheRecord> cache_teachers(const std::map<std::string, TeacherModel>& teachers,
                                               const std::vector<Corpus>& corpora,
                                               const Tagset& student_tagset, const KDLossKind& kd_kind,
                                               int cache_k = 0, int threads = 1,
                                               const EventSink& sink = {});

// Multilingual student against gold + cached pseudo-targets, lambda starting
// at 1 and annealed by tau per epoch.
TrainResult train_student(const std::vector<LanguageData>& languages, const ModelShape& shape,
                          const Tagset& tagset, LabelScheme scheme,
                          const std::map<std::string, TeacherTargets>& cache,
                          const TrainConfig& config, const EventSink& sink = {});

// Thread count: STRUCTKD_THREADS when set, else the given default.
int thread_cap(int fallback);

}  // namespace structkd

#endif  // STRUCTKD_PIPELINE_HPP_
