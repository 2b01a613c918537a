// Copyright 2026 The w2assim Authors
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

// Shared generators and independent reference implementations for tests.
// Nothing here calls into the code paths it is used to check.

#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "w2assim/assimilation.hpp"
#include "w2assim/gaussian_core.hpp"
#include "w2assim/rng.hpp"

namespace w2assim::testing {

/// Kind of the w2assim::Error thrown by fn, or nullopt if none was thrown.
template <class F>
std::optional<ErrorKind> thrown_kind(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline Matrix random_matrix(CounterRng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline Vector random_vector(CounterRng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

/// B^T B + shift I with B standard normal.
inline SpdMatrix random_spd(CounterRng& rng, Eigen::Index n, double shift = 0.1) {
  const Matrix b = random_matrix(rng, n, n);
  return validate_spd(b.transpose() * b + shift * Matrix::Identity(n, n));
}

inline Gaussian random_gaussian(CounterRng& rng, Eigen::Index n) {
  return Gaussian(random_vector(rng, n), random_spd(rng, n));
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
inline Matrix random_orthogonal(CounterRng& rng, Eigen::Index n) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, n, n));
  return qr.householderQ() * Matrix::Identity(n, n);
}

/// Minimum mean squared distance over all perfect matchings.
inline double brute_force_matching_cost(const std::vector<Vector>& a,
                                        const std::vector<Vector>& b) {
  const std::size_t n = a.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += (a[i] - b[perm[i]]).squaredNorm();
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

/// Textbook covariance recursion: P- = A P A^T + Q, K = P- C^T (C P- C^T + R)^-1,
/// P+ = (I - K C) P- (I - K C)^T + K R K^T, via an explicit inverse.
struct TextbookKalman {
  Matrix A, Q, C, R;

  std::vector<Matrix> posterior_covs(Matrix p, std::size_t steps) const {
    const Eigen::Index n = p.rows();
    std::vector<Matrix> out;
    for (std::size_t k = 0; k < steps; ++k) {
      if (k > 0) p = A * p * A.transpose() + Q;
      const Matrix s = C * p * C.transpose() + R;
      const Matrix k_gain = p * C.transpose() * s.inverse();
      const Matrix j = Matrix::Identity(n, n) - k_gain * C;
      p = j * p * j.transpose() + k_gain * R * k_gain.transpose();
      out.push_back(p);
    }
    return out;
  }
};

/// Random system of the acceptance protocol: Sigma = B^T B + 0.1 I,
/// R = D^T D + 0.1 I, C standard normal.
struct RandomSystem {
  SpdMatrix prior_err_cov;
  LinearSensor sensor;
};

inline RandomSystem random_system(CounterRng& rng, Eigen::Index n, Eigen::Index m) {
  SpdMatrix sigma = random_spd(rng, n);
  SpdMatrix r = random_spd(rng, m);
  Matrix c = random_matrix(rng, m, n);
  return {std::move(sigma), LinearSensor(std::move(c), std::move(r))};
}

}  // namespace w2assim::testing
