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


#include "structkd/losses.hpp"

#include <spdlog/spdlog.h>

#include <cctype>
#include <cmath>
#include <string>

namespace structkd {

namespace {

void check_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractViolation("distribution matrices differ in shape: " + std::to_string(a.rows()) +
                            "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                            "x" + std::to_string(b.cols()));
}

// Cross-entropy between row distributions where the student side is given as
// log-probabilities. Entries below the floor are clamped and excluded from
// the gradient via the returned mask.
double cross_entropy_log(const Matrix& teacher, const Matrix& student_log, Matrix* active) {
  const double log_floor = std::log(kProbFloor);
  double loss = 0.0;
  long clamped = 0;
  if (active) *active = Matrix::Zero(teacher.rows(), teacher.cols());
  for (Eigen::Index i = 0; i < teacher.rows(); ++i) {
    for (Eigen::Index j = 0; j < teacher.cols(); ++j) {
      const double t = teacher(i, j);
      if (t <= 0.0) continue;
      double ls = student_log(i, j);
      if (!(ls >= log_floor)) {
        ls = log_floor;
        ++clamped;
      } else if (active) {
        (*active)(i, j) = 1.0;
      }
      loss -= t * ls;
    }
  }
  if (clamped > 0)
    spdlog::warn("{} student probabilities clamped at floor {:g}", clamped, kProbFloor);
  return loss;
}

Matrix log_softmax_rows(const Matrix& scores) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double lse = log_sum_exp<double>(scores.row(i).transpose());
    out.row(i) = scores.row(i).array() - lse;
  }
  return out;
}

void check_kbest(const KBestList& teacher, const Lattice& student) {
  if (teacher.empty()) throw ContractViolation("teacher k-best list is empty");
  for (const auto& e : teacher.entries)
    if (static_cast<int>(e.labels.size()) != student.length())
      throw ContractViolation("teacher sequence length does not match student lattice");
}

}  // namespace

KDLossKind::KDLossKind(KDVariant v, int k_value) : variant(v), k(needs_k(v) ? k_value : 0) {
  if (needs_k(v) && k_value < 1)
    throw ContractViolation(std::string(variant_name(v)) + " needs k >= 1");
}

std::string_view variant_name(KDVariant v) {
  switch (v) {
    case KDVariant::Token: return "token";
    case KDVariant::Emission: return "emission";
    case KDVariant::TopK: return "topk";
    case KDVariant::TopWK: return "topwk";
    case KDVariant::Posterior: return "posterior";
    case KDVariant::PosTopWK: return "pos_topwk";
  }
  return "?";
}

KDLossKind KDLossKind::parse(std::string_view text) {
  std::string name(text.substr(0, text.find(':')));
  for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (KDVariant v : {KDVariant::Token, KDVariant::Emission, KDVariant::TopK, KDVariant::TopWK,
                      KDVariant::Posterior, KDVariant::PosTopWK}) {
    if (name != variant_name(v)) continue;
    const auto colon = text.find(':');
    if (needs_k(v)) {
      if (colon == std::string_view::npos)
        throw ConfigError("kd kind '" + name + "' needs k, e.g. '" + name + ":5'");
      int k = 0;
      try {
        k = std::stoi(std::string(text.substr(colon + 1)));
      } catch (const std::exception&) {
        throw ConfigError("bad k in kd kind '" + std::string(text) + "'");
      }
      if (k < 1) throw ConfigError("k must be >= 1 in '" + std::string(text) + "'");
      return KDLossKind(v, k);
    }
    if (colon != std::string_view::npos)
      throw ConfigError("kd kind '" + name + "' takes no k");
    return KDLossKind(v);
  }
  throw ConfigError("unknown kd kind '" + std::string(text) + "'");
}

std::string KDLossKind::to_string() const {
  std::string s(variant_name(variant));
  if (needs_k(variant)) s += ":" + std::to_string(k);
  return s;
}

Matrix softmax_rows(const Matrix& scores) { return log_softmax_rows(scores).array().exp(); }

double token_kd_loss(const Matrix& teacher_probs, const Matrix& student_probs) {
  check_same_shape(teacher_probs, student_probs);
  return cross_entropy_log(teacher_probs, student_probs.array().log().matrix(), nullptr);
}

double token_kd_loss_and_grad(const Matrix& teacher_probs, const Matrix& student_logits,
                              Matrix& logit_grad) {
  check_same_shape(teacher_probs, student_logits);
  const Matrix log_s = log_softmax_rows(student_logits);
  Matrix active;
  const double loss = cross_entropy_log(teacher_probs, log_s, &active);
  // d/dz_ij of -sum_c t_ic log softmax(z_i)_c = (sum_c t_ic) s_ij - t_ij, over active entries.
  const Matrix t = teacher_probs.cwiseProduct(active);
  const Matrix s = log_s.array().exp();
  logit_grad = s.array().colwise() * t.rowwise().sum().array();
  logit_grad -= t;
  return loss;
}

double emission_kd_loss(const Lattice& teacher, const Lattice& student) {
  if (teacher.length() != student.length() || teacher.num_labels() != student.num_labels())
    throw ContractViolation("teacher and student lattices differ in shape");
  return cross_entropy_log(softmax_rows(teacher.emissions()), log_softmax_rows(student.emissions()),
                           nullptr);
}

LossGrad emission_kd_loss_and_grad(const Matrix& teacher_emission_probs, const Lattice& student) {
  LossGrad out{0.0, LatticeGrad::zeros_like(student)};
  out.loss = token_kd_loss_and_grad(teacher_emission_probs, student.emissions(), out.grad.emissions);
  return out;
}

double topk_kd_loss(const KBestList& teacher, const Lattice& student) {
  check_kbest(teacher, student);
  const double log_z = log_partition(student);
  double sum = 0.0;
  for (const auto& e : teacher.entries) sum -= sequence_score(student, e.labels) - log_z;
  return sum / static_cast<double>(teacher.size());
}

namespace {

// -sum_y w_y log p_s(y) with arbitrary weights, plus gradient.
LossGrad weighted_sequence_ce(const KBestList& teacher, const std::vector<double>& weights,
                              const Lattice& student) {
  check_kbest(teacher, student);
  const Matrix alpha = forward_scores(student);
  const double log_z = log_sum_exp<double>(alpha.row(student.length() - 1).transpose());
  LossGrad out{0.0, LatticeGrad::zeros_like(student)};
  double total_weight = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const auto& y = teacher[i].labels;
    out.loss -= weights[i] * (sequence_score(student, y) - log_z);
    accumulate_path_grad(student, y, -weights[i], out.grad);
    total_weight += weights[i];
  }
  accumulate_log_partition_grad(student, alpha, total_weight, out.grad);
  return out;
}

}  // namespace

LossGrad topk_kd_loss_and_grad(const KBestList& teacher, const Lattice& student) {
  const std::vector<double> w(teacher.size(), 1.0 / static_cast<double>(std::max<std::size_t>(1, teacher.size())));
  return weighted_sequence_ce(teacher, w, student);
}

double topwk_kd_loss(const KBestList& teacher, const Lattice& student) {
  check_kbest(teacher, student);
  const double log_z = log_partition(student);
  double sum = 0.0;
  for (const auto& e : teacher.entries) sum -= e.weight * (sequence_score(student, e.labels) - log_z);
  return sum;
}

LossGrad topwk_kd_loss_and_grad(const KBestList& teacher, const Lattice& student) {
  std::vector<double> w;
  w.reserve(teacher.size());
  for (const auto& e : teacher.entries) w.push_back(e.weight);
  return weighted_sequence_ce(teacher, w, student);
}

double posterior_kd_loss(const PosteriorMatrix& teacher, const PosteriorMatrix& student) {
  check_same_shape(teacher, student);
  return cross_entropy_log(teacher, student.array().log().matrix(), nullptr);
}

LossGrad posterior_kd_loss_and_grad(const PosteriorMatrix& teacher, const Lattice& student) {
  if (teacher.rows() != student.length() || teacher.cols() != student.num_labels())
    throw ContractViolation("teacher posteriors do not match student lattice shape");
  const Matrix alpha = forward_scores(student);
  const Matrix beta = backward_scores(student);
  const double log_z = log_sum_exp<double>(alpha.row(student.length() - 1).transpose());
  const Matrix log_q = (alpha + beta).array() - log_z;

  Matrix active;
  LossGrad out{cross_entropy_log(teacher, log_q, &active), LatticeGrad::zeros_like(student)};
  // loss = -sum t (log alpha + log beta - log Z) over active entries.
  const Matrix t = teacher.cwiseProduct(active);
  backprop_forward_backward<double>(student, alpha, beta, -t, -t, out.grad);
  accumulate_log_partition_grad(student, alpha, t.sum(), out.grad);
  return out;
}

double pos_topwk_loss(const KBestList& teacher_kbest, const PosteriorMatrix& teacher_post,
                      const Lattice& student) {
  return 0.5 * (topwk_kd_loss(teacher_kbest, student) +
                posterior_kd_loss(teacher_post, posteriors(student)));
}

LossGrad pos_topwk_loss_and_grad(const KBestList& teacher_kbest, const PosteriorMatrix& teacher_post,
                                 const Lattice& student) {
  LossGrad out = topwk_kd_loss_and_grad(teacher_kbest, student);
  const LossGrad post = posterior_kd_loss_and_grad(teacher_post, student);
  out.loss = 0.5 * (out.loss + post.loss);
  out.grad += post.grad;
  out.grad *= 0.5;
  return out;
}

double softmax_nll_and_grad(const Matrix& logits, const LabelSequence& gold, Matrix& logit_grad) {
  if (static_cast<Eigen::Index>(gold.size()) != logits.rows())
    throw ContractViolation("gold length does not match emission rows");
  const Matrix log_s = log_softmax_rows(logits);
  logit_grad = log_s.array().exp();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const int y = gold[static_cast<std::size_t>(i)];
    if (y < 0 || y >= logits.cols()) throw IndexError("gold label out of range");
    loss -= log_s(i, y);
    logit_grad(i, y) -= 1.0;
  }
  return loss;
}

LossGrad kd_loss_and_grad(const KDLossKind& kind, const TeacherTargets& targets,
                          const Lattice& student) {
  const auto need_kbest = [&]() -> const KBestList& {
    if (!targets.kbest) throw DataError("teacher targets lack a k-best list");
    return *targets.kbest;
  };
  const auto need_probs = [&]() -> const Matrix& {
    if (!targets.probs) throw DataError("teacher targets lack token distributions");
    return *targets.probs;
  };
  switch (kind.variant) {
    case KDVariant::Token:
    case KDVariant::Emission:
      return emission_kd_loss_and_grad(need_probs(), student);
    case KDVariant::TopK:
      return topk_kd_loss_and_grad(need_kbest().truncated(static_cast<std::size_t>(kind.k)), student);
    case KDVariant::TopWK:
      return topwk_kd_loss_and_grad(need_kbest().truncated(static_cast<std::size_t>(kind.k)), student);
    case KDVariant::Posterior:
      return posterior_kd_loss_and_grad(need_probs(), student);
    case KDVariant::PosTopWK:
      return pos_topwk_loss_and_grad(need_kbest().truncated(static_cast<std::size_t>(kind.k)),
                                     need_probs(), student);
  }
  throw ContractViolation("unhandled kd kind");
}

}  // namespace structkd
