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


// Shared fixtures and brute-force oracles for the test suites. The oracles
// enumerate label sequences and sum raw potentials; they never call the
// inference routines they check.

#ifndef STRUCTKD_TESTS_TEST_UTIL_HPP_
#define STRUCTKD_TESTS_TEST_UTIL_HPP_

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "structkd/lattice.hpp"

namespace structkd::testing {

inline constexpr int F = 0;
inline constexpr int T = 1;

// The worked 3-token {F, T} example: psi(start, y1) = 1, then the two 2x2
// pair-potential blocks.
inline Lattice table1_lattice() {
  Matrix start(1, 2), second(2, 2), third(2, 2);
  start << 1.0, 1.0;
  second << 2.0, 0.5,
            0.5, 2.0;
  third << 1.0 / 3.0, 3.0,
           4.0, 0.25;
  return Lattice::from_potentials({start, second, third});
}

inline Lattice random_lattice(std::mt19937_64& rng, int n, int labels, bool with_pairwise = false,
                              double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix e(n, labels), t(labels + 1, labels);
  for (Eigen::Index i = 0; i < e.size(); ++i) e.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = normal(rng);
  if (!with_pairwise) return Lattice(e, t);
  std::vector<Matrix> pw;
  for (int k = 0; k < n; ++k) {
    Matrix b(labels + 1, labels);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = normal(rng);
    pw.push_back(b);
  }
  return Lattice(e, t, pw);
}

inline std::vector<LabelSequence> all_sequences(int n, int labels) {
  std::vector<LabelSequence> out;
  LabelSequence y(n, 0);
  while (true) {
    out.push_back(y);
    int i = n - 1;
    while (i >= 0 && ++y[i] == labels) y[i--] = 0;
    if (i < 0) break;
  }
  return out;
}

// Log joint score accumulated left to right straight from the stored tables.
inline double oracle_score(const Lattice& lat, const LabelSequence& y, int upto = -1) {
  const int last = upto < 0 ? lat.length() - 1 : upto;
  const auto term = [&](int prev, int cur, int pos) {
    double s = lat.emissions()(pos, cur) + lat.transitions()(prev, cur);
    if (lat.has_pairwise()) s += lat.pairwise()[pos](prev, cur);
    return s;
  };
  double s = term(lat.num_labels(), y[0], 0);
  for (int i = 1; i <= last; ++i) s += term(y[i - 1], y[i], i);
  return s;
}

inline double oracle_partition(const Lattice& lat) {
  long double z = 0;
  for (const auto& y : all_sequences(lat.length(), lat.num_labels())) z += std::exp((long double)oracle_score(lat, y));
  return static_cast<double>(z);
}

// alpha(k, j): sum over prefixes y_0..y_k ending in j.
inline Matrix oracle_alpha(const Lattice& lat) {
  Matrix a = Matrix::Zero(lat.length(), lat.num_labels());
  for (int k = 0; k < lat.length(); ++k)
    for (const auto& prefix : all_sequences(k + 1, lat.num_labels()))
      a(k, prefix[k]) += std::exp(oracle_score(lat, prefix, k));
  return a;
}

// beta(k, j): sum over suffixes y_{k+1}..y_{n-1} given y_k = j, excluding
// the potential at k.
inline Matrix oracle_beta(const Lattice& lat) {
  const int n = lat.length();
  const int labels = lat.num_labels();
  Matrix b = Matrix::Ones(n, labels);
  for (int k = 0; k + 1 < n; ++k) {
    for (int j = 0; j < labels; ++j) {
      double sum = 0;
      for (const auto& suffix : all_sequences(n - 1 - k, labels)) {
        double s = 0;
        int prev = j;
        for (int i = 0; i < static_cast<int>(suffix.size()); ++i) {
          const int pos = k + 1 + i;
          s += lat.emissions()(pos, suffix[i]) + lat.transitions()(prev, suffix[i]);
          if (lat.has_pairwise()) s += lat.pairwise()[pos](prev, suffix[i]);
          prev = suffix[i];
        }
        sum += std::exp(s);
      }
      b(k, j) = sum;
    }
  }
  return b;
}

// Marginalisation of the joint distribution with y_k fixed.
inline Matrix oracle_posteriors(const Lattice& lat) {
  const double z = oracle_partition(lat);
  Matrix q = Matrix::Zero(lat.length(), lat.num_labels());
  for (const auto& y : all_sequences(lat.length(), lat.num_labels())) {
    const double p = std::exp(oracle_score(lat, y)) / z;
    for (int k = 0; k < lat.length(); ++k) q(k, y[k]) += p;
  }
  return q;
}

// True when a should rank before b: higher score, else the lower label at
// the latest position where they differ.
inline bool oracle_ranks_before(double sa, const LabelSequence& a, double sb, const LabelSequence& b) {
  if (sa != sb) return sa > sb;
  for (int i = static_cast<int>(a.size()) - 1; i >= 0; --i)
    if (a[i] != b[i]) return a[i] < b[i];
  return false;
}

struct ScoredSequence {
  LabelSequence labels;
  double score;
};

inline std::vector<ScoredSequence> oracle_ranked(const Lattice& lat) {
  std::vector<ScoredSequence> all;
  for (auto& y : all_sequences(lat.length(), lat.num_labels())) {
    const double s = oracle_score(lat, y);
    all.push_back({std::move(y), s});
  }
  std::stable_sort(all.begin(), all.end(), [](const ScoredSequence& a, const ScoredSequence& b) {
    return oracle_ranks_before(a.score, a.labels, b.score, b.labels);
  });
  return all;
}

// Table values are printed to 2 decimals; exact halves such as 8.125 sit
// on the rounding boundary.
inline bool matches_printed(double got, double printed) {
  return std::abs(got - printed) <= 0.005 + 1e-12;
}

// Relative error for gradient checks; the floor keeps entries that are zero
// up to finite-difference noise from dividing by ~0.
inline double grad_rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace structkd::testing

#endif  // STRUCTKD_TESTS_TEST_UTIL_HPP_
