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


#ifndef STRUCTKD_LATTICE_HPP_
#define STRUCTKD_LATTICE_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "structkd/errors.hpp"

namespace structkd {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

// One labeling y_1..y_n of a sentence, as label indices.
using LabelSequence = std::vector<int>;

// Scores of a linear-chain CRF over one sentence, kept in log space.
//
//   log psi(prev, cur, pos) = emissions(pos, cur) + transitions(prev, cur)
//                             [+ pairwise[pos](prev, cur)]
//
// transitions has num_labels()+1 rows; the last row is the start symbol,
// which is only a legal predecessor at pos 0. The optional per-position
// pairwise term lets a lattice carry arbitrary position-dependent pair
// potentials (hand-written potential tables); models never produce it.
template <typename Scalar>
class BasicLattice {
 public:
  using MatrixType = MatrixX<Scalar>;

  BasicLattice(MatrixType emissions, MatrixType transitions)
      : emissions_(std::move(emissions)), transitions_(std::move(transitions)) {
    validate();
  }

  BasicLattice(MatrixType emissions, MatrixType transitions, std::vector<MatrixType> pairwise)
      : emissions_(std::move(emissions)),
        transitions_(std::move(transitions)),
        pairwise_(std::move(pairwise)) {
    validate();
  }

  // Builds a lattice from raw (non-log) pair potentials. potentials[0] is a
  // 1 x V row of start potentials; potentials[k] for k > 0 is V x V indexed
  // (prev, cur). Emissions and transitions are zero.
  static BasicLattice from_potentials(const std::vector<MatrixType>& potentials) {
    if (potentials.empty()) throw ContractViolation("potential table needs at least one position");
    const Eigen::Index labels = potentials.front().cols();
    if (potentials.front().rows() != 1) throw ContractViolation("first potential block must be 1 x V");
    std::vector<MatrixType> pairwise;
    pairwise.reserve(potentials.size());
    for (std::size_t k = 0; k < potentials.size(); ++k) {
      const MatrixType& block = potentials[k];
      const Eigen::Index expect_rows = k == 0 ? 1 : labels;
      if (block.rows() != expect_rows || block.cols() != labels)
        throw ContractViolation("potential block " + std::to_string(k) + " has the wrong shape");
      if ((block.array() <= Scalar(0)).any())
        throw ContractViolation("potentials must be strictly positive");
      MatrixType logs = MatrixType::Zero(labels + 1, labels);
      if (k == 0)
        logs.row(labels) = block.row(0).array().log().matrix();
      else
        logs.topRows(labels) = block.array().log().matrix();
      pairwise.push_back(std::move(logs));
    }
    const auto n = static_cast<Eigen::Index>(potentials.size());
    return BasicLattice(MatrixType::Zero(n, labels), MatrixType::Zero(labels + 1, labels),
                        std::move(pairwise));
  }

  int length() const { return static_cast<int>(emissions_.rows()); }
  int num_labels() const { return static_cast<int>(emissions_.cols()); }
  int start() const { return num_labels(); }

  const MatrixType& emissions() const { return emissions_; }
  const MatrixType& transitions() const { return transitions_; }
  bool has_pairwise() const { return !pairwise_.empty(); }
  const std::vector<MatrixType>& pairwise() const { return pairwise_; }

  // Unchecked log potential; inference loops call this in the hot path.
  Scalar score(int prev, int cur, int pos) const {
    Scalar s = emissions_(pos, cur) + transitions_(prev, cur);
    if (!pairwise_.empty()) s += pairwise_[pos](prev, cur);
    return s;
  }

  // Returns a copy with a constant added to every emission at one position.
  BasicLattice shifted(int pos, Scalar c) const {
    BasicLattice out = *this;
    out.emissions_.row(pos).array() += c;
    return out;
  }

 private:
  void validate() const {
    if (emissions_.rows() < 1) throw ContractViolation("lattice needs at least one token");
    if (emissions_.cols() < 1) throw ContractViolation("lattice needs at least one label");
    if (transitions_.rows() != emissions_.cols() + 1 || transitions_.cols() != emissions_.cols())
      throw ContractViolation("transitions must be (|V|+1) x |V|");
    if (!emissions_.allFinite() || !transitions_.allFinite())
      throw ContractViolation("lattice scores must be finite");
    if (!pairwise_.empty()) {
      if (static_cast<Eigen::Index>(pairwise_.size()) != emissions_.rows())
        throw ContractViolation("pairwise term needs one block per token");
      for (const auto& block : pairwise_) {
        if (block.rows() != transitions_.rows() || block.cols() != transitions_.cols())
          throw ContractViolation("pairwise blocks must be (|V|+1) x |V|");
        if (!block.allFinite()) throw ContractViolation("lattice scores must be finite");
      }
    }
  }

  MatrixType emissions_;
  MatrixType transitions_;
  std::vector<MatrixType> pairwise_;
};

using Lattice = BasicLattice<double>;

// Gradient of a scalar with respect to every score a lattice holds.
template <typename Scalar>
struct BasicLatticeGrad {
  MatrixX<Scalar> emissions;
  MatrixX<Scalar> transitions;
  std::vector<MatrixX<Scalar>> pairwise;

  static BasicLatticeGrad zeros_like(const BasicLattice<Scalar>& lattice) {
    BasicLatticeGrad g;
    g.emissions = MatrixX<Scalar>::Zero(lattice.length(), lattice.num_labels());
    g.transitions = MatrixX<Scalar>::Zero(lattice.num_labels() + 1, lattice.num_labels());
    if (lattice.has_pairwise())
      g.pairwise.assign(lattice.length(),
                        MatrixX<Scalar>::Zero(lattice.num_labels() + 1, lattice.num_labels()));
    return g;
  }

  // d(score(prev, cur, pos)) += value
  void add_potential(int prev, int cur, int pos, Scalar value) {
    emissions(pos, cur) += value;
    transitions(prev, cur) += value;
    if (!pairwise.empty()) pairwise[pos](prev, cur) += value;
  }

  BasicLatticeGrad& operator+=(const BasicLatticeGrad& other) {
    emissions += other.emissions;
    transitions += other.transitions;
    for (std::size_t k = 0; k < pairwise.size(); ++k) pairwise[k] += other.pairwise[k];
    return *this;
  }

  BasicLatticeGrad& operator*=(Scalar s) {
    emissions *= s;
    transitions *= s;
    for (auto& block : pairwise) block *= s;
    return *this;
  }
};

using LatticeGrad = BasicLatticeGrad<double>;

template <typename Scalar>
struct BasicKBestEntry {
  LabelSequence labels;
  Scalar log_score;  // unnormalised log joint score sum_i log psi
  Scalar weight;     // probability renormalised over the list
};

// k highest-scoring distinct sequences, best first.
template <typename Scalar>
struct BasicKBestList {
  std::vector<BasicKBestEntry<Scalar>> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  const BasicKBestEntry<Scalar>& operator[](std::size_t i) const { return entries[i]; }

  // First k entries with weights renormalised over the prefix.
  BasicKBestList truncated(std::size_t k) const;
  // Sets weights to the softmax of the log scores over the whole list.
  void renormalize();
};

using KBestEntry = BasicKBestEntry<double>;
using KBestList = BasicKBestList<double>;

// Row i holds q(y_i = . | x).
using PosteriorMatrix = Matrix;

template <typename Scalar>
Scalar log_sum_exp(const Eigen::Ref<const VectorX<Scalar>>& v) {
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(static_cast<double>(m))) return m;
  return m + std::log((v.array() - m).exp().sum());
}

template <typename Scalar>
void BasicKBestList<Scalar>::renormalize() {
  if (entries.empty()) return;
  VectorX<Scalar> scores(static_cast<Eigen::Index>(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) scores(static_cast<Eigen::Index>(i)) = entries[i].log_score;
  const Scalar norm = log_sum_exp<Scalar>(scores);
  for (auto& e : entries) e.weight = std::exp(e.log_score - norm);
}

template <typename Scalar>
BasicKBestList<Scalar> BasicKBestList<Scalar>::truncated(std::size_t k) const {
  BasicKBestList out;
  const std::size_t keep = std::min(k, entries.size());
  out.entries.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep));
  out.renormalize();
  return out;
}

}  // namespace structkd

#endif  // STRUCTKD_LATTICE_HPP_
