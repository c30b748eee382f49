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


#ifndef STRUCTKD_INFERENCE_HPP_
#define STRUCTKD_INFERENCE_HPP_

// Exact inference over linear-chain CRF lattices. Everything is computed in
// log space; raw potentials are never materialised.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "structkd/lattice.hpp"

namespace structkd {

namespace detail {

template <typename Scalar>
void check_sequence(const BasicLattice<Scalar>& lattice, const LabelSequence& y) {
  if (static_cast<int>(y.size()) != lattice.length())
    throw ContractViolation("label sequence length " + std::to_string(y.size()) +
                            " does not match lattice length " + std::to_string(lattice.length()));
  for (int label : y)
    if (label < 0 || label >= lattice.num_labels())
      throw IndexError("label " + std::to_string(label) + " out of range");
}

}  // namespace detail

// log psi(prev, cur, pos). prev may be lattice.start() only at pos 0.
template <typename Scalar>
Scalar log_potential(const BasicLattice<Scalar>& lattice, int prev, int cur, int pos) {
  if (pos < 0 || pos >= lattice.length())
    throw IndexError("position " + std::to_string(pos) + " out of range");
  if (cur < 0 || cur >= lattice.num_labels())
    throw IndexError("label " + std::to_string(cur) + " out of range");
  if (prev < 0 || prev > lattice.start())
    throw IndexError("previous label " + std::to_string(prev) + " out of range");
  if (pos == 0 && prev != lattice.start())
    throw ContractViolation("position 0 must be preceded by the start symbol");
  if (pos > 0 && prev == lattice.start())
    throw ContractViolation("start symbol is only legal before position 0");
  return lattice.score(prev, cur, pos);
}

// log alpha(y_k) for every position and label. alpha includes the potential
// at position k.
template <typename Scalar>
MatrixX<Scalar> forward_scores(const BasicLattice<Scalar>& lattice) {
  const int n = lattice.length();
  const int labels = lattice.num_labels();
  MatrixX<Scalar> alpha(n, labels);
  for (int j = 0; j < labels; ++j) alpha(0, j) = lattice.score(lattice.start(), j, 0);
  VectorX<Scalar> terms(labels);
  for (int k = 1; k < n; ++k) {
    for (int j = 0; j < labels; ++j) {
      for (int p = 0; p < labels; ++p) terms(p) = alpha(k - 1, p) + lattice.score(p, j, k);
      alpha(k, j) = log_sum_exp<Scalar>(terms);
    }
  }
  return alpha;
}

// log beta(y_k). beta sums over suffix paths starting at position k+1 and
// excludes the emission at k; the final row is identically 0.
template <typename Scalar>
MatrixX<Scalar> backward_scores(const BasicLattice<Scalar>& lattice) {
  const int n = lattice.length();
  const int labels = lattice.num_labels();
  MatrixX<Scalar> beta = MatrixX<Scalar>::Zero(n, labels);
  VectorX<Scalar> terms(labels);
  for (int k = n - 2; k >= 0; --k) {
    for (int j = 0; j < labels; ++j) {
      for (int c = 0; c < labels; ++c) terms(c) = lattice.score(j, c, k + 1) + beta(k + 1, c);
      beta(k, j) = log_sum_exp<Scalar>(terms);
    }
  }
  return beta;
}

template <typename Scalar>
Scalar log_partition(const BasicLattice<Scalar>& lattice) {
  const MatrixX<Scalar> alpha = forward_scores(lattice);
  return log_sum_exp<Scalar>(alpha.row(lattice.length() - 1).transpose());
}

// Unnormalised log joint score sum_i log psi(y_{i-1}, y_i, r_i), accumulated
// left to right.
template <typename Scalar>
Scalar sequence_score(const BasicLattice<Scalar>& lattice, const LabelSequence& y) {
  detail::check_sequence(lattice, y);
  Scalar s = lattice.score(lattice.start(), y[0], 0);
  for (int i = 1; i < lattice.length(); ++i) s += lattice.score(y[i - 1], y[i], i);
  return s;
}

template <typename Scalar>
Scalar sequence_log_prob(const BasicLattice<Scalar>& lattice, const LabelSequence& y) {
  return sequence_score(lattice, y) - log_partition(lattice);
}

// q(y_k | x) = exp(log alpha + log beta - log Z), row-normalised.
template <typename Scalar>
MatrixX<Scalar> log_posteriors(const BasicLattice<Scalar>& lattice) {
  const MatrixX<Scalar> alpha = forward_scores(lattice);
  const MatrixX<Scalar> beta = backward_scores(lattice);
  const Scalar log_z = log_sum_exp<Scalar>(alpha.row(lattice.length() - 1).transpose());
  return (alpha + beta).array() - log_z;
}

template <typename Scalar>
MatrixX<Scalar> posteriors(const BasicLattice<Scalar>& lattice) {
  MatrixX<Scalar> q = log_posteriors(lattice).array().exp();
  // Renormalise each row to absorb rounding in log Z.
  for (Eigen::Index i = 0; i < q.rows(); ++i) q.row(i) /= q.row(i).sum();
  return q;
}

// Best sequence; equal scores prefer the lower label at the latest position
// where the candidates differ.
template <typename Scalar>
LabelSequence viterbi(const BasicLattice<Scalar>& lattice) {
  const int n = lattice.length();
  const int labels = lattice.num_labels();
  MatrixX<Scalar> best(n, labels);
  Eigen::MatrixXi back(n, labels);
  for (int j = 0; j < labels; ++j) {
    best(0, j) = lattice.score(lattice.start(), j, 0);
    back(0, j) = lattice.start();
  }
  for (int k = 1; k < n; ++k) {
    for (int j = 0; j < labels; ++j) {
      int arg = 0;
      Scalar top = best(k - 1, 0) + lattice.score(0, j, k);
      for (int p = 1; p < labels; ++p) {
        const Scalar s = best(k - 1, p) + lattice.score(p, j, k);
        if (s > top) {
          top = s;
          arg = p;
        }
      }
      best(k, j) = top;
      back(k, j) = arg;
    }
  }
  LabelSequence y(n);
  int arg = 0;
  for (int j = 1; j < labels; ++j)
    if (best(n - 1, j) > best(n - 1, arg)) arg = j;
  y[n - 1] = arg;
  for (int k = n - 1; k > 0; --k) y[k - 1] = back(k, y[k]);
  return y;
}

// The min(k, |V|^n) best distinct sequences, best first, with weights
// renormalised over the returned list. Each state keeps its own ranked list
// of partial paths; candidates are ordered by (score desc, predecessor label
// asc, predecessor rank asc), which realises the viterbi tie-break exactly.
template <typename Scalar>
BasicKBestList<Scalar> kbest_viterbi(const BasicLattice<Scalar>& lattice, int k) {
  if (k < 1) throw ContractViolation("k must be at least 1");
  const int n = lattice.length();
  const int labels = lattice.num_labels();

  struct Cell {
    Scalar score;
    int prev_label;
    int prev_rank;
  };
  // cells[pos][label] is the ranked list of partial paths ending there.
  std::vector<std::vector<std::vector<Cell>>> cells(n, std::vector<std::vector<Cell>>(labels));

  for (int j = 0; j < labels; ++j)
    cells[0][j].push_back({lattice.score(lattice.start(), j, 0), lattice.start(), 0});

  // Each predecessor list is already ranked, and adding a constant step keeps
  // it ranked, so the best k of their union is a |V|-way merge.
  std::vector<int> head(labels);
  std::vector<Scalar> step(labels), front(labels);
  const auto merge = [&](const std::vector<std::vector<Cell>>& from, std::vector<Cell>& into) {
    std::size_t available = 0;
    for (int p = 0; p < labels; ++p) {
      head[p] = 0;
      available += from[p].size();
      if (!from[p].empty()) front[p] = from[p][0].score + step[p];
    }
    const int want = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k), available));
    into.clear();
    into.reserve(static_cast<std::size_t>(want));
    while (static_cast<int>(into.size()) < want) {
      // ties go to the lower predecessor label; ranks within one list ascend
      int pick = -1;
      for (int p = 0; p < labels; ++p) {
        if (head[p] >= static_cast<int>(from[p].size())) continue;
        if (pick < 0 || front[p] > front[pick]) pick = p;
      }
      into.push_back({front[pick], pick, head[pick]});
      if (++head[pick] < static_cast<int>(from[pick].size())) front[pick] = from[pick][head[pick]].score + step[pick];
    }
  };

  for (int pos = 1; pos < n; ++pos) {
    for (int j = 0; j < labels; ++j) {
      for (int p = 0; p < labels; ++p) step[p] = lattice.score(p, j, pos);
      merge(cells[pos - 1], cells[pos][j]);
    }
  }

  std::vector<Cell> candidates;
  std::fill(step.begin(), step.end(), Scalar(0));
  merge(cells[n - 1], candidates);
  const std::size_t keep = candidates.size();

  BasicKBestList<Scalar> out;
  out.entries.reserve(keep);
  for (std::size_t c = 0; c < keep; ++c) {
    LabelSequence y(n);
    int label = candidates[c].prev_label;
    int rank = candidates[c].prev_rank;
    for (int pos = n - 1; pos >= 0; --pos) {
      y[pos] = label;
      const Cell& cell = cells[pos][label][rank];
      label = cell.prev_label;
      rank = cell.prev_rank;
    }
    out.entries.push_back({std::move(y), candidates[c].score, Scalar(0)});
  }
  out.renormalize();
  return out;
}

// Reverse-mode pass through the forward and backward recursions. Given
// adjoints d_alpha, d_beta of some scalar with respect to log alpha and
// log beta, accumulates its gradient with respect to every lattice score.
template <typename Scalar>
void backprop_forward_backward(const BasicLattice<Scalar>& lattice, const MatrixX<Scalar>& alpha,
                               const MatrixX<Scalar>& beta, MatrixX<Scalar> d_alpha,
                               MatrixX<Scalar> d_beta, BasicLatticeGrad<Scalar>& grad) {
  const int n = lattice.length();
  const int labels = lattice.num_labels();

  // beta(k, j) = lse_c score(j, c, k+1) + beta(k+1, c); adjoints flow k -> k+1.
  for (int k = 0; k + 1 < n; ++k) {
    for (int j = 0; j < labels; ++j) {
      const Scalar g = d_beta(k, j);
      if (g == Scalar(0)) continue;
      for (int c = 0; c < labels; ++c) {
        const Scalar w = std::exp(lattice.score(j, c, k + 1) + beta(k + 1, c) - beta(k, j));
        grad.add_potential(j, c, k + 1, g * w);
        d_beta(k + 1, c) += g * w;
      }
    }
  }

  // alpha(k, j) = score(j, k) + lse_p alpha(k-1, p) + trans; adjoints flow k -> k-1.
  for (int k = n - 1; k > 0; --k) {
    for (int j = 0; j < labels; ++j) {
      const Scalar g = d_alpha(k, j);
      if (g == Scalar(0)) continue;
      for (int p = 0; p < labels; ++p) {
        const Scalar w = std::exp(alpha(k - 1, p) + lattice.score(p, j, k) - alpha(k, j));
        grad.add_potential(p, j, k, g * w);
        d_alpha(k - 1, p) += g * w;
      }
    }
  }
  for (int j = 0; j < labels; ++j) grad.add_potential(lattice.start(), j, 0, d_alpha(0, j));
}

// grad += scale * d(log Z): node and pairwise marginals.
template <typename Scalar>
void accumulate_log_partition_grad(const BasicLattice<Scalar>& lattice, const MatrixX<Scalar>& alpha,
                                   Scalar scale, BasicLatticeGrad<Scalar>& grad) {
  const int n = lattice.length();
  const Scalar log_z = log_sum_exp<Scalar>(alpha.row(n - 1).transpose());
  MatrixX<Scalar> d_alpha = MatrixX<Scalar>::Zero(n, lattice.num_labels());
  d_alpha.row(n - 1) = scale * (alpha.row(n - 1).array() - log_z).exp().matrix();
  const MatrixX<Scalar> unused_beta = MatrixX<Scalar>::Zero(n, lattice.num_labels());
  backprop_forward_backward<Scalar>(lattice, alpha, unused_beta, std::move(d_alpha),
                                    MatrixX<Scalar>::Zero(n, lattice.num_labels()), grad);
}

// grad += scale * d(sequence_score(y)): path indicator features.
template <typename Scalar>
void accumulate_path_grad(const BasicLattice<Scalar>& lattice, const LabelSequence& y, Scalar scale,
                          BasicLatticeGrad<Scalar>& grad) {
  detail::check_sequence(lattice, y);
  grad.add_potential(lattice.start(), y[0], 0, scale);
  for (int i = 1; i < lattice.length(); ++i) grad.add_potential(y[i - 1], y[i], i, scale);
}

template <typename Scalar>
struct BasicLossGrad {
  Scalar loss;
  BasicLatticeGrad<Scalar> grad;
};

using LossGrad = BasicLossGrad<double>;

// Negative log-likelihood of the gold sequence and its gradient: posterior
// marginals minus gold indicators, over emissions, transitions and any
// pairwise term.
template <typename Scalar>
BasicLossGrad<Scalar> nll_and_grad(const BasicLattice<Scalar>& lattice, const LabelSequence& gold) {
  detail::check_sequence(lattice, gold);
  const MatrixX<Scalar> alpha = forward_scores(lattice);
  const Scalar log_z = log_sum_exp<Scalar>(alpha.row(lattice.length() - 1).transpose());
  BasicLossGrad<Scalar> out{log_z - sequence_score(lattice, gold),
                            BasicLatticeGrad<Scalar>::zeros_like(lattice)};
  accumulate_log_partition_grad(lattice, alpha, Scalar(1), out.grad);
  accumulate_path_grad(lattice, gold, Scalar(-1), out.grad);
  return out;
}

}  // namespace structkd

#endif  // STRUCTKD_INFERENCE_HPP_
