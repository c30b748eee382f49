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


#include "structkd/pipeline.hpp"

#include <spdlog/spdlog.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "structkd/errors.hpp"
#include "structkd/inference.hpp"

namespace structkd {

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots; the first exception is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

void emit(const EventSink& sink, PipelineEvent event) {
  if (sink) sink(event);
}

}  // namespace

std::string_view decoder_name(Decoder d) { return d == Decoder::Crf ? "crf" : "softmax"; }

Decoder parse_decoder(std::string_view text) {
  if (text == "crf") return Decoder::Crf;
  if (text == "softmax") return Decoder::Softmax;
  throw ConfigError("unknown decoder '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (batch_tokens < 1) throw ConfigError("batch_tokens must be positive");
  if (!(lr >= 0.0)) throw ConfigError("lr must be non-negative");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must be in (0, 1]");
  if (patience_epochs < 1) throw ConfigError("patience_epochs must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  if (max_lr_decays < 0) throw ConfigError("max_lr_decays must be non-negative");
  if (!(tau >= 0.0)) throw ConfigError("tau must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0, 1)");
  if (threads < 1) throw ConfigError("threads must be positive");
  if (KDLossKind::needs_k(kd_kind.variant) && kd_kind.k < 1) throw ConfigError("k must be >= 1");
}

std::string to_json_line(const EpochLog& log) {
  nlohmann::json j;
  j["epoch"] = log.epoch;
  j["lambda"] = log.lambda;
  j["lr"] = log.lr;
  j["train_loss"] = log.train_loss;
  j["train_kd"] = log.train_kd;
  j["train_nll"] = log.train_nll;
  j["dev_metric_per_language"] = log.dev_per_language;
  j["dev_macro"] = log.dev_macro;
  j["lr_decayed"] = log.lr_decayed;
  return j.dump();
}

std::vector<std::vector<std::size_t>> batch_by_tokens(std::span<const int> lengths, int batch_tokens,
                                                      std::mt19937_64& rng) {
  if (batch_tokens < 1) throw ContractViolation("batch_tokens must be positive");
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  long used = 0;
  for (std::size_t idx : order) {
    const int len = lengths[idx];
    if (len > batch_tokens) {
      spdlog::warn("sentence of {} tokens exceeds the batch budget of {}; emitted alone", len, batch_tokens);
      if (!current.empty()) batches.push_back(std::move(current));
      current.clear();
      used = 0;
      batches.push_back({idx});
      continue;
    }
    if (used + len > batch_tokens) {
      batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(idx);
    used += len;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

std::vector<TokenBatch> batch_by_tokens(const std::vector<Example>& corpus, int batch_tokens,
                                        std::uint64_t seed) {
  std::vector<int> lengths;
  lengths.reserve(corpus.size());
  for (const auto& ex : corpus) lengths.push_back(static_cast<int>(ex.tokens.size()));
  std::mt19937_64 rng(seed);
  std::vector<TokenBatch> out;
  for (const auto& plan : batch_by_tokens(lengths, batch_tokens, rng)) {
    TokenBatch b;
    for (std::size_t i : plan) b.sentences.push_back({corpus[i].tokens, corpus[i].language});
    out.push_back(std::move(b));
  }
  return out;
}

SentenceLoss sentence_loss_and_grad(const ModelParams& params, const Example& example,
                                    const TeacherTargets* targets, const Objective& objective,
                                    ModelParams* grads, const Matrix& input_mask) {
  const EncoderTrace trace = encode_sentence(params, example.tokens, input_mask);
  const double lambda = objective.kd ? objective.lambda : 0.0;
  const bool use_kd = objective.kd && lambda > 0.0;
  if (use_kd && !targets) throw DataError("no teacher targets for sentence " + example.id);

  SentenceLoss out;
  Matrix emission_grad;
  Matrix transition_grad;
  if (objective.decoder == Decoder::Softmax) {
    Matrix g_nll;
    out.nll = softmax_nll_and_grad(trace.emissions, example.gold, g_nll);
    emission_grad = (1.0 - lambda) * g_nll;
    if (use_kd) {
      if (!targets->probs) throw DataError("sentence " + example.id + " lacks token distributions");
      Matrix g_kd;
      out.kd = token_kd_loss_and_grad(*targets->probs, trace.emissions, g_kd);
      emission_grad += lambda * g_kd;
    }
  } else {
    const Lattice lattice = make_lattice(params, trace.emissions);
    const LossGrad nll = nll_and_grad(lattice, example.gold);
    out.nll = nll.loss;
    emission_grad = (1.0 - lambda) * nll.grad.emissions;
    transition_grad = (1.0 - lambda) * nll.grad.transitions;
    if (use_kd) {
      const LossGrad kd = kd_loss_and_grad(*objective.kd, *targets, lattice);
      out.kd = kd.loss;
      emission_grad += lambda * kd.grad.emissions;
      transition_grad += lambda * kd.grad.transitions;
    }
  }
  out.total = interpolated_loss(out.kd, out.nll, {lambda, 0.0});
  if (grads) {
    backprop_sentence(params, trace, emission_grad, *grads);
    if (transition_grad.size() > 0) grads->transitions += transition_grad;
  }
  return out;
}

LabelSequence predict(const ModelParams& params, Decoder decoder, std::span<const int> tokens) {
  Matrix emissions = encode_sentence(params, tokens).emissions;
  if (decoder == Decoder::Crf) return viterbi(make_lattice(params, std::move(emissions)));
  LabelSequence y(static_cast<std::size_t>(emissions.rows()));
  for (Eigen::Index i = 0; i < emissions.rows(); ++i) {
    Eigen::Index arg = 0;
    emissions.row(i).maxCoeff(&arg);
    y[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return y;
}

double evaluate(const ModelParams& params, Decoder decoder, const std::vector<Example>& examples,
                LabelScheme scheme, const Tagset& tagset) {
  std::vector<LabelSequence> gold, pred;
  gold.reserve(examples.size());
  pred.reserve(examples.size());
  for (const auto& ex : examples) {
    gold.push_back(ex.gold);
    pred.push_back(predict(params, decoder, ex.tokens));
  }
  return task_metric(scheme, tagset, gold, pred);
}

int thread_cap(int fallback) {
  if (const char* env = std::getenv("STRUCTKD_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1, fallback);
}

TrainResult train(const TrainSetup& setup, const TrainConfig& config, const EventSink& sink) {
  config.validate();
  if (setup.languages.empty()) throw ConfigError("no training languages");
  std::vector<const Example*> merged;
  for (const auto& lang : setup.languages)
    for (const auto& ex : lang.train) merged.push_back(&ex);
  if (merged.empty()) throw ConfigError("training corpus is empty");
  if (setup.tagset.size() != setup.shape.labels) throw ConfigError("tagset size does not match model shape");

  // Targets per merged example, resolved up front so a missing record fails
  // before any update.
  std::vector<const TeacherTargets*> targets(merged.size(), nullptr);
  if (setup.kd) {
    if (!setup.cache) throw ConfigError("KD training needs a teacher cache");
    for (std::size_t i = 0; i < merged.size(); ++i) {
      auto it = setup.cache->find(merged[i]->id);
      if (it != setup.cache->end()) targets[i] = &it->second;
      else if (setup.initial_lambda > 0.0)
        throw DataError("missing teacher cache record for sentence " + merged[i]->id);
    }
  }

  TrainResult result;
  ModelParams params = setup.init ? *setup.init : ModelParams::init(setup.shape, config.seed);
  if (params.shape() != setup.shape) throw ConfigError("initial parameters do not match model shape");
  result.best = params;
  result.best_dev = -std::numeric_limits<double>::infinity();

  InterpolationState interp{setup.kd ? setup.initial_lambda : 0.0, config.tau};
  double lr = setup.initial_lr.value_or(config.lr);
  int since_best = 0;
  int decays = 0;
  long step = 0;
  const int threads = thread_cap(config.threads);
  std::vector<int> lengths;
  for (const Example* ex : merged) lengths.push_back(static_cast<int>(ex->tokens.size()));

  for (int epoch = setup.first_epoch; epoch <= config.max_epochs; ++epoch) {
    // Shuffle order depends only on (seed, epoch).
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    const auto plan = batch_by_tokens(lengths, config.batch_tokens, shuffle_rng);
    const Objective objective{setup.decoder, setup.kd, interp.lambda};

    EpochLog log;
    log.epoch = epoch;
    log.lambda = interp.lambda;
    log.lr = lr;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      const auto& batch = plan[b];
      std::vector<ModelParams> grads(batch.size());
      std::vector<SentenceLoss> losses(batch.size());
      parallel_for(batch.size(), threads, [&](std::size_t i) {
        const std::size_t idx = batch[i];
        const Example& ex = *merged[idx];
        Matrix mask;
        if (config.input_dropout && config.dropout_rate > 0.0) {
          std::mt19937_64 drop_rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch), idx + 1));
          std::bernoulli_distribution keep(1.0 - config.dropout_rate);
          mask.resize(static_cast<Eigen::Index>(ex.tokens.size()), setup.shape.emb_dim);
          for (Eigen::Index e = 0; e < mask.size(); ++e)
            mask.data()[e] = keep(drop_rng) ? 1.0 / (1.0 - config.dropout_rate) : 0.0;
        }
        grads[i] = params.zeros_like();
        losses[i] = sentence_loss_and_grad(params, ex, targets[idx], objective, &grads[i], mask);
      });

      // Ordered reduction keeps results independent of the thread count.
      ModelParams total = std::move(grads[0]);
      for (std::size_t i = 1; i < grads.size(); ++i) total += grads[i];
      total *= 1.0 / static_cast<double>(batch.size());
      for (const auto& l : losses) {
        log.train_loss += l.total;
        log.train_kd += l.kd;
        log.train_nll += l.nll;
      }
      if (config.freeze_embeddings) total.embeddings.setZero();
      const double norm = std::sqrt(total.squared_norm());
      if (norm > config.clip_norm) total *= config.clip_norm / norm;
      total *= -lr;
      params += total;
      ++step;
      emit(sink, {"step", epoch, step, std::to_string(batch.size())});
    }
    const double count = static_cast<double>(merged.size());
    log.train_loss /= count;
    log.train_kd /= count;
    log.train_nll /= count;
    if (!params.all_finite()) throw DataError("parameters diverged at epoch " + std::to_string(epoch));

    for (const auto& lang : setup.languages) {
      const double m = lang.dev.empty() ? 0.0 : evaluate(params, setup.decoder, lang.dev, setup.scheme, setup.tagset);
      log.dev_per_language[lang.language] = m;
      log.dev_macro += m;
    }
    log.dev_macro /= static_cast<double>(setup.languages.size());

    if (log.dev_macro > result.best_dev) {
      result.best_dev = log.dev_macro;
      result.best_epoch = epoch;
      result.best = params;
      since_best = 0;
    } else {
      ++since_best;
    }

    bool stop = false;
    if (since_best >= config.patience_epochs) {
      if (decays >= config.max_lr_decays) {
        stop = true;
      } else {
        lr *= config.lr_decay;
        ++decays;
        since_best = 0;
        log.lr_decayed = true;
        emit(sink, {"lr_decay", epoch, step, std::to_string(lr)});
      }
    }
    if (setup.kd) interp = anneal_lambda(interp);
    result.log.push_back(log);
    emit(sink, {"epoch", epoch, step, to_json_line(log)});
    spdlog::debug("epoch {} loss {:.4f} dev {:.4f} lambda {} lr {}", epoch, log.train_loss, log.dev_macro,
                  log.lambda, log.lr);
    if (stop) {
      emit(sink, {"stop", epoch, step, "lr decayed " + std::to_string(decays) + " times"});
      break;
    }
  }
  result.last = std::move(params);
  return result;
}

TrainResult train_teacher(const LanguageData& data, const ModelShape& shape, const Tagset& tagset,
                          LabelScheme scheme, const TrainConfig& config, const EventSink& sink) {
  if (data.train.empty()) throw ConfigError("teacher corpus for '" + data.language + "' is empty");
  TrainSetup setup;
  setup.shape = shape;
  setup.decoder = decoder_for(config.kd_kind);
  setup.scheme = scheme;
  setup.tagset = tagset;
  setup.languages = {data};
  return train(setup, config, sink);
}

std::vector<TeacherCacheRecord> cache_teachers(const std::map<std::string, TeacherModel>& teachers,
                                               const std::vector<Corpus>& corpora,
                                               const Tagset& student_tagset, const KDLossKind& kd_kind,
                                               int cache_k, int threads, const EventSink& sink) {
  const int k = cache_k > 0 ? cache_k : kd_kind.k;
  if (kd_kind.uses_kbest() && k < 1) throw ConfigError("k-best caching needs k >= 1");
  // Validate everything before producing a single record.
  for (const auto& corpus : corpora) {
    auto it = teachers.find(corpus.language);
    if (it == teachers.end()) throw ConfigError("no teacher for language '" + corpus.language + "'");
    if (!(it->second.tagset == student_tagset))
      throw ConfigError("teacher tagset for '" + corpus.language + "' differs from the student tagset");
    if (kd_kind.variant != KDVariant::Token && it->second.decoder != Decoder::Crf)
      throw ConfigError("teacher for '" + corpus.language + "' must be a CRF model for " + kd_kind.to_string());
  }

  std::vector<TeacherCacheRecord> records;
  for (const auto& corpus : corpora) {
    const TeacherModel& teacher = teachers.at(corpus.language);
    std::vector<TeacherCacheRecord> local(corpus.train.size());
    parallel_for(corpus.train.size(), threads, [&](std::size_t i) {
      const Example& ex = corpus.train[i];
      std::vector<int> ids;
      ids.reserve(ex.words.size());
      for (const auto& w : ex.words) ids.push_back(teacher.vocab.lookup(w));
      Matrix emissions = encode_sentence(teacher.params, ids).emissions;
      TeacherCacheRecord& r = local[i];
      r.sentence_id = ex.id;
      r.language = corpus.language;
      r.teacher_hash = teacher.hash;
      if (kd_kind.uses_emission_probs()) {
        r.posteriors = softmax_rows(emissions);
      } else {
        const Lattice lattice = make_lattice(teacher.params, std::move(emissions));
        if (kd_kind.uses_kbest()) r.kbest = kbest_viterbi(lattice, k);
        if (kd_kind.uses_posteriors()) r.posteriors = posteriors(lattice);
      }
    });
    for (auto& r : local) {
      emit(sink, {"cache_record", 0, 0, r.sentence_id});
      records.push_back(std::move(r));
    }
  }
  emit(sink, {"cache_complete", 0, 0, std::to_string(records.size())});
  return records;
}

TrainResult train_student(const std::vector<LanguageData>& languages, const ModelShape& shape,
                          const Tagset& tagset, LabelScheme scheme,
                          const std::map<std::string, TeacherTargets>& cache,
                          const TrainConfig& config, const EventSink& sink) {
  TrainSetup setup;
  setup.shape = shape;
  setup.decoder = decoder_for(config.kd_kind);
  setup.scheme = scheme;
  setup.tagset = tagset;
  setup.languages = languages;
  setup.cache = &cache;
  setup.kd = config.kd_kind;
  setup.initial_lambda = 1.0;
  return train(setup, config, sink);
}

}  // namespace structkd
