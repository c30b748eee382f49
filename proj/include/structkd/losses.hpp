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


#ifndef STRUCTKD_LOSSES_HPP_
#define STRUCTKD_LOSSES_HPP_

#include <optional>
#include <string>
#include <string_view>

#include "structkd/inference.hpp"
#include "structkd/lattice.hpp"

namespace structkd {

// Probability floor applied when a teacher puts mass where the student's
// probability underflows.
inline constexpr double kProbFloor = 1e-12;

enum class KDVariant { Token, Emission, TopK, TopWK, Posterior, PosTopWK };

struct KDLossKind {
  KDVariant variant = KDVariant::Posterior;
  int k = 0;  // only meaningful for TopK, TopWK, PosTopWK

  KDLossKind() = default;
  KDLossKind(KDVariant v, int k_value = 0);

  static bool needs_k(KDVariant v) {
    return v == KDVariant::TopK || v == KDVariant::TopWK || v == KDVariant::PosTopWK;
  }
  bool uses_kbest() const { return needs_k(variant); }
  bool uses_posteriors() const {
    return variant == KDVariant::Posterior || variant == KDVariant::PosTopWK;
  }
  // Token/Emission targets are per-token softmax distributions of emissions.
  bool uses_emission_probs() const {
    return variant == KDVariant::Token || variant == KDVariant::Emission;
  }

  // "posterior", "topwk:5", ... as used in configs and on the command line.
  static KDLossKind parse(std::string_view text);
  std::string to_string() const;

  bool operator==(const KDLossKind&) const = default;
};

std::string_view variant_name(KDVariant v);

struct InterpolationState {
  double lambda = 1.0;
  double tau = 1.0;
};

// Row-wise softmax.
Matrix softmax_rows(const Matrix& scores);

// -sum_i sum_j p_t(i,j) log p_s(i,j)
double token_kd_loss(const Matrix& teacher_probs, const Matrix& student_probs);

// Token KD against a softmax student given its logits; gradient w.r.t. logits.
double token_kd_loss_and_grad(const Matrix& teacher_probs, const Matrix& student_logits,
                              Matrix& logit_grad);

// Cross-entropy between per-token softmax of the two lattices' emissions;
// transitions are ignored.
double emission_kd_loss(const Lattice& teacher, const Lattice& student);
LossGrad emission_kd_loss_and_grad(const Matrix& teacher_emission_probs, const Lattice& student);

// Unweighted mean of -log p_s(y) over the teacher's k-best list.
double topk_kd_loss(const KBestList& teacher, const Lattice& student);
LossGrad topk_kd_loss_and_grad(const KBestList& teacher, const Lattice& student);

// -sum_y w_t(y) log p_s(y) with the teacher's renormalised k-best weights.
double topwk_kd_loss(const KBestList& teacher, const Lattice& student);
LossGrad topwk_kd_loss_and_grad(const KBestList& teacher, const Lattice& student);

// -sum_i sum_j q_t(i,j) log q_s(i,j) over token marginals.
double posterior_kd_loss(const PosteriorMatrix& teacher, const PosteriorMatrix& student);
LossGrad posterior_kd_loss_and_grad(const PosteriorMatrix& teacher, const Lattice& student);

// 1:1 mean of topwk_kd_loss and posterior_kd_loss.
double pos_topwk_loss(const KBestList& teacher_kbest, const PosteriorMatrix& teacher_post,
                      const Lattice& student);
LossGrad pos_topwk_loss_and_grad(const KBestList& teacher_kbest,
                                 const PosteriorMatrix& teacher_post, const Lattice& student);

// Token-level NLL of the softmax model variant; gradient w.r.t. logits.
double softmax_nll_and_grad(const Matrix& logits, const LabelSequence& gold, Matrix& logit_grad);

// Pseudo-targets a teacher produced for one sentence.
struct TeacherTargets {
  std::optional<KBestList> kbest;
  std::optional<Matrix> probs;  // posteriors, or emission softmax for Token/Emission
};

// Dispatches on kind for a CRF student. Token is handled by callers that
// run the softmax model variant (see token_kd_loss_and_grad).
LossGrad kd_loss_and_grad(const KDLossKind& kind, const TeacherTargets& targets,
                          const Lattice& student);

inline double interpolated_loss(double kd, double nll, const InterpolationState& state) {
  return state.lambda * kd + (1.0 - state.lambda) * nll;
}

// lambda <- max(lambda - tau, 0); called once per epoch.
inline InterpolationState anneal_lambda(InterpolationState state) {
  state.lambda = state.lambda - state.tau > 0.0 ? state.lambda - state.tau : 0.0;
  return state;
}

}  // namespace structkd

#endif  // STRUCTKD_LOSSES_HPP_
