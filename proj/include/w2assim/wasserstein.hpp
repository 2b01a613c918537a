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

// Closed-form 2-Wasserstein distances between Gaussians and from a Gaussian
// to a point mass.
//
// Two algebraically equal routes exist for the Gaussian-Gaussian covariance
// term. The nested-root trace form
//
//   tr(S1) + tr(S2) - 2 tr((sqrt(S1) S2 sqrt(S1))^{1/2})
//
// subtracts nearly equal traces, which leaves O(eps * tr S) residue in the
// radicand and O(sqrt(eps)) error in the distance. w2_gaussian() instead uses
//
//   || sqrt(S1) - sqrt(S2) U ||_F^2,   U = polar factor of sqrt(S2) sqrt(S1),
//
// a sum of squares with no cancellation. The trace form is kept as
// w2sq_gaussian_trace_form() and the two are cross-checked in tests.

#pragma once

#include <Eigen/SVD>

#include <cmath>

#include "w2assim/gaussian_core.hpp"

namespace w2assim {

namespace detail {

inline void require_same_dim(const Gaussian& a, const Gaussian& b) {
  require_dims(a.dim(), b.dim(), "Gaussians must share a dimension");
}

// Clamps a radicand that is negative only by rounding; anything further below
// zero is a numerical failure rather than a NaN.
inline double clamp_radicand(double radicand, double scale) {
  if (radicand >= 0.0) return radicand;
  if (radicand >= -kSpdTolerance * scale) return 0.0;
  throw Error(ErrorKind::NegativeRadicand,
              "squared distance " + std::to_string(radicand) +
                  " is negative beyond rounding");
}

}  // namespace detail

/// Squared covariance part of W2 via the polar-factor Frobenius form.
inline double bures_squared(const SpdMatrix& cov1, const SpdMatrix& cov2) {
  detail::require_dims(cov1.dim(), cov2.dim(), "covariances must share a dim");
  const Matrix root1 = spd_sqrt(cov1).matrix();
  const Matrix root2 = spd_sqrt(cov2).matrix();
  Eigen::JacobiSVD<Matrix> svd(root2 * root1,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Matrix polar = svd.matrixU() * svd.matrixV().transpose();
  return (root1 - root2 * polar).squaredNorm();
}

inline double w2sq_gaussian(const Gaussian& g1, const Gaussian& g2) {
  detail::require_same_dim(g1, g2);
  return (g1.mean() - g2.mean()).squaredNorm() + bures_squared(g1.cov(), g2.cov());
}

/// W2 between two Gaussians.
inline double w2_gaussian(const Gaussian& g1, const Gaussian& g2) {
  return std::sqrt(w2sq_gaussian(g1, g2));
}

/// W2^2 by the nested-root trace formula, sqrt(S1) S2 sqrt(S1) ordering.
/// Radicands in [-1e-10 * scale, 0) clamp to zero; lower values throw
/// NegativeRadicand.
inline double w2sq_gaussian_trace_form(const Gaussian& g1, const Gaussian& g2) {
  detail::require_same_dim(g1, g2);
  const Matrix root1 = spd_sqrt(g1.cov()).matrix();
  const Matrix inner = root1 * g2.cov().matrix() * root1;
  const double cross = spd_sqrt(validate_spd(0.5 * (inner + inner.transpose()))).trace();
  const double mean_term = (g1.mean() - g2.mean()).squaredNorm();
  const double scale = mean_term + g1.cov().trace() + g2.cov().trace();
  return detail::clamp_radicand(
      mean_term + g1.cov().trace() + g2.cov().trace() - 2.0 * cross, scale);
}

/// W2 from a Gaussian to a point mass: sqrt(|mu - c|^2 + tr S).
inline double w2_gaussian_dirac(const Gaussian& g, const DiracMass& d) {
  detail::require_dims(g.dim(), d.dim(), "Gaussian and Dirac must share a dim");
  return std::sqrt((g.mean() - d.point()).squaredNorm() + g.cov().trace());
}

/// W2^2 to a point mass written as tr((mu - c)(mu - c)^T + S).
inline double w2sq_dirac_trace_form(const Gaussian& g, const DiracMass& d) {
  detail::require_dims(g.dim(), d.dim(), "Gaussian and Dirac must share a dim");
  const Vector offset = g.mean() - d.point();
  const Matrix second_moment = offset * offset.transpose() + g.cov().matrix();
  return second_moment.trace();
}

}  // namespace w2assim
