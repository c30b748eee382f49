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


#include <cmath>
#include <random>

#include "doctest.h"
#include "structkd/inference.hpp"
#include "test_util.hpp"

using namespace structkd;
using namespace structkd::testing;

TEST_CASE("log_potential on the worked example") {
  const Lattice lat = table1_lattice();
  CHECK(log_potential(lat, lat.start(), F, 0) == doctest::Approx(0.0));
  CHECK(log_potential(lat, F, F, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(log_potential(lat, T, F, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  const Lattice zero(Matrix::Zero(3, 2), Matrix::Zero(3, 2));
  CHECK(log_potential(zero, 1, 0, 2) == 0.0);

  CHECK_THROWS_AS(log_potential(lat, F, F, 3), IndexError);
  CHECK_THROWS_AS(log_potential(lat, F, 2, 1), IndexError);
  CHECK_THROWS_AS(log_potential(lat, lat.start(), F, 1), ContractViolation);
  CHECK_THROWS_AS(log_potential(lat, F, F, 0), ContractViolation);
}

TEST_CASE("lattice construction rejects bad shapes and non-finite scores") {
  CHECK_THROWS_AS(Lattice(Matrix::Zero(0, 2), Matrix::Zero(3, 2)), ContractViolation);
  CHECK_THROWS_AS(Lattice(Matrix::Zero(2, 2), Matrix::Zero(2, 2)), ContractViolation);
  Matrix e = Matrix::Zero(2, 2);
  e(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Lattice(e, Matrix::Zero(3, 2)), ContractViolation);
}

TEST_CASE("log_partition") {
  const Lattice lat = table1_lattice();
  // 18.9583... = 455/24 by enumeration of the eight potential products.
  CHECK(log_partition(lat) == doctest::Approx(std::log(455.0 / 24.0)).epsilon(1e-12));
  CHECK(log_partition(lat) == doctest::Approx(2.9423).epsilon(1e-4));

  const Lattice two(Matrix::Zero(1, 2), Matrix::Zero(3, 2));
  CHECK(log_partition(two) == doctest::Approx(std::log(2.0)));

  std::mt19937_64 rng(7);
  const Lattice r = random_lattice(rng, 4, 3);
  CHECK(rel_err(log_partition(r), std::log(oracle_partition(r))) < 1e-10);
}

TEST_CASE("sequence_log_prob") {
  const Lattice lat = table1_lattice();
  CHECK(std::exp(sequence_log_prob(lat, {T, T, F})) == doctest::Approx(0.422).epsilon(0.005 / 0.422));
  CHECK(sequence_log_prob(lat, {T, T, F}) == doctest::Approx(-0.8627).epsilon(1e-3));
  CHECK(sequence_log_prob(lat, {F, F, T}) == doctest::Approx(-1.1504).epsilon(1e-3));
  double total = 0;
  for (const auto& y : all_sequences(3, 2)) total += std::exp(sequence_log_prob(lat, y));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  CHECK_THROWS_AS(sequence_log_prob(lat, {T, T}), ContractViolation);
  CHECK_THROWS_AS(sequence_log_prob(lat, {T, T, 5}), IndexError);
}

TEST_CASE("viterbi") {
  const Lattice lat = table1_lattice();
  CHECK(viterbi(lat) == LabelSequence{T, T, F});

  const Lattice zero(Matrix::Zero(4, 3), Matrix::Zero(4, 3));
  CHECK(viterbi(zero) == LabelSequence{0, 0, 0, 0});

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Lattice r = random_lattice(rng, 5, 4);
    CHECK(viterbi(r) == oracle_ranked(r).front().labels);
  }
}

TEST_CASE("forward and backward scores on the worked example") {
  const Lattice lat = table1_lattice();
  const Matrix alpha = forward_scores(lat).array().exp();
  const Matrix beta = backward_scores(lat).array().exp();
  const double a_f[] = {1.00, 2.50, 10.83}, a_t[] = {1.00, 2.50, 8.13};
  const double b_f[] = {8.79, 3.33, 1.00}, b_t[] = {10.17, 4.25, 1.00};
  for (int k = 0; k < 3; ++k) {
    CHECK(matches_printed(alpha(k, F), a_f[k]));
    CHECK(matches_printed(alpha(k, T), a_t[k]));
    CHECK(matches_printed(beta(k, F), b_f[k]));
    CHECK(matches_printed(beta(k, T), b_t[k]));
  }
  CHECK(backward_scores(lat).row(2).isZero(0.0));

  const Lattice one(Matrix::Zero(1, 3), Matrix::Zero(4, 3));
  CHECK(forward_scores(one).isZero(0.0));
}

TEST_CASE("forward and backward scores match prefix/suffix enumeration") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const Lattice r = random_lattice(rng, 1 + trial % 5, 2 + trial % 3, trial % 2 == 1);
    const Matrix alpha = forward_scores(r).array().exp();
    const Matrix beta = backward_scores(r).array().exp();
    const Matrix a_ref = oracle_alpha(r);
    const Matrix b_ref = oracle_beta(r);
    for (Eigen::Index i = 0; i < alpha.size(); ++i) {
      CHECK(std::abs(alpha.data()[i] - a_ref.data()[i]) / a_ref.data()[i] < 1e-10);
      CHECK(std::abs(beta.data()[i] - b_ref.data()[i]) / b_ref.data()[i] < 1e-10);
    }
  }
}

TEST_CASE("posteriors") {
  const Lattice lat = table1_lattice();
  const Matrix q = posteriors(lat);
  const double q_f[] = {0.46, 0.44, 0.57}, q_t[] = {0.54, 0.56, 0.43};
  for (int k = 0; k < 3; ++k) {
    CHECK(matches_printed(q(k, F), q_f[k]));
    CHECK(matches_printed(q(k, T), q_t[k]));
  }

  const Lattice zero(Matrix::Zero(4, 3), Matrix::Zero(4, 3));
  CHECK(posteriors(zero).isApprox(Matrix::Constant(4, 3, 1.0 / 3.0), 1e-14));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Lattice r = random_lattice(rng, 1 + trial % 6, 2 + trial % 3, trial % 3 == 0);
    const Matrix got = posteriors(r);
    const Matrix want = oracle_posteriors(r);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((got.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("alpha * beta sums to Z at every position") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Lattice r = random_lattice(rng, 1 + trial % 6, 1 + trial % 4, trial % 2 == 0);
    const Matrix ab = (forward_scores(r) + backward_scores(r)).array().exp();
    const double z = std::exp(log_partition(r));
    for (int k = 0; k < r.length(); ++k) CHECK(std::abs(ab.row(k).sum() - z) / z < 1e-9);
  }
  const Lattice lat = table1_lattice();
  const Matrix ab = (forward_scores(lat) + backward_scores(lat)).array().exp();
  CHECK(ab.row(2).sum() == doctest::Approx(18.96).epsilon(0.005 / 18.96));
}

TEST_CASE("emission shift at one position leaves distributions unchanged") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> shift(-20.0, 20.0);
  for (int trial = 0; trial < 25; ++trial) {
    const Lattice r = random_lattice(rng, 2 + trial % 4, 2 + trial % 3);
    const int pos = trial % r.length();
    const Lattice s = r.shifted(pos, shift(rng));
    const LabelSequence y = viterbi(r);
    CHECK(viterbi(s) == y);
    CHECK(std::abs(sequence_log_prob(s, y) - sequence_log_prob(r, y)) < 1e-10);
    CHECK((posteriors(s) - posteriors(r)).cwiseAbs().maxCoeff() < 1e-10);
    const KBestList a = kbest_viterbi(r, 4), b = kbest_viterbi(s, 4);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].labels == b[i].labels);
      CHECK(std::abs(a[i].weight - b[i].weight) < 1e-10);
    }
  }
}

namespace {

double fd(const Lattice& lat, const LabelSequence& gold, int which, int r, int c, int pos) {
  const double h = 1e-5;
  auto bumped = [&](double delta) {
    Matrix e = lat.emissions(), t = lat.transitions();
    std::vector<Matrix> pw = lat.pairwise();
    if (which == 0) e(r, c) += delta;
    else if (which == 1) t(r, c) += delta;
    else pw[pos](r, c) += delta;
    const Lattice l = pw.empty() ? Lattice(e, t) : Lattice(e, t, pw);
    return -sequence_log_prob(l, gold);
  };
  return (bumped(h) - bumped(-h)) / (2 * h);
}

}  // namespace

TEST_CASE("nll_and_grad") {
  const Lattice lat = table1_lattice();
  const LossGrad out = nll_and_grad(lat, {T, T, F});
  CHECK(out.loss == doctest::Approx(-std::log(8.0 / (455.0 / 24.0))).epsilon(1e-12));
  CHECK(out.loss == doctest::Approx(0.8627).epsilon(1e-3));

  // A confident model with the gold path dominating has ~zero gradient.
  Matrix e = Matrix::Zero(3, 2);
  e(0, 1) = e(1, 0) = e(2, 1) = 60.0;
  const LossGrad sharp = nll_and_grad(Lattice(e, Matrix::Zero(3, 2)), {1, 0, 1});
  CHECK(sharp.grad.emissions.cwiseAbs().maxCoeff() < 1e-12);

  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Lattice r = random_lattice(rng, 4, 3, trial % 2 == 1);
    LabelSequence gold(4);
    for (auto& g : gold) g = static_cast<int>(rng() % 3);
    const LossGrad got = nll_and_grad(r, gold);
    CHECK(got.loss == doctest::Approx(-sequence_log_prob(r, gold)).epsilon(1e-12));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) CHECK(grad_rel_err(got.grad.emissions(i, j), fd(r, gold, 0, i, j, 0)) < 1e-4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) CHECK(grad_rel_err(got.grad.transitions(i, j), fd(r, gold, 1, i, j, 0)) < 1e-4);
    if (r.has_pairwise())
      for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 3; ++j)
            CHECK(grad_rel_err(got.grad.pairwise[k](i, j), fd(r, gold, 2, i, j, k)) < 1e-4);
    // Emission gradient rows are posteriors minus the gold indicator.
    Matrix expect = posteriors(r);
    for (int i = 0; i < 4; ++i) expect(i, gold[i]) -= 1.0;
    CHECK((got.grad.emissions - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("inference is scalar-generic") {
  using LatticeL = BasicLattice<long double>;
  MatrixX<long double> e = MatrixX<long double>::Zero(2, 2), t = MatrixX<long double>::Zero(3, 2);
  const LatticeL lat(e, t);
  CHECK(static_cast<double>(log_partition(lat)) == doctest::Approx(std::log(4.0)));
  CHECK(viterbi(lat) == LabelSequence{0, 0});
}
