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

// Symmetric positive-semidefinite matrices, principal square roots, Gaussian
// and point-mass containers, seeded sampling and empirical moments. Every
// covariance in the library passes through validate_spd().

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "w2assim/errors.hpp"
#include "w2assim/rng.hpp"

namespace w2assim {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Relative band for the symmetry and positive-semidefiniteness checks.
inline constexpr double kSpdTolerance = 1e-10;

namespace detail {

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline Eigen::SelfAdjointEigenSolver<Matrix> eigen_symmetric(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::EigenFailure,
                "symmetric eigendecomposition did not converge");
  }
  return solver;
}

}  // namespace detail

/// A symmetric positive-semidefinite matrix. Only obtainable through
/// validate_spd(), so holding one means the checks have passed.
class SpdMatrix {
 public:
  static SpdMatrix identity(Eigen::Index dim) {
    return SpdMatrix(Matrix::Identity(dim, dim));
  }
  static SpdMatrix zero(Eigen::Index dim) {
    return SpdMatrix(Matrix::Zero(dim, dim));
  }

  Eigen::Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }

  friend SpdMatrix validate_spd(const Matrix& matrix, double tol);

 private:
  explicit SpdMatrix(Matrix m) : m_(std::move(m)) {}

  Matrix m_;
};

/// Checks symmetry and positive semidefiniteness within a band relative to
/// the matrix scale, then returns the exactly symmetrized matrix. Eigenvalues
/// in [-tol * (1 + lambda_max), 0) are clamped to zero.
inline SpdMatrix validate_spd(const Matrix& matrix, double tol = kSpdTolerance) {
  detail::require(tol >= 0.0, ErrorKind::InvalidArgument,
                  "tolerance must be nonnegative");
  detail::require(matrix.rows() == matrix.cols(), ErrorKind::DimMismatch,
                  "matrix is not square");
  detail::require(matrix.rows() > 0, ErrorKind::DimMismatch, "matrix is empty");
  detail::require(detail::all_finite(matrix), ErrorKind::NonFinite,
                  "matrix has non-finite entries");

  const double max_abs = matrix.cwiseAbs().maxCoeff();
  const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol * (1.0 + max_abs)) {
    throw Error(ErrorKind::NotSymmetric,
                "asymmetry " + std::to_string(asym) + " exceeds band");
  }
  Matrix sym = 0.5 * (matrix + matrix.transpose());

  const auto solver = detail::eigen_symmetric(sym);
  const Vector& lambda = solver.eigenvalues();  // ascending
  const double lambda_max = lambda(lambda.size() - 1);
  const double lambda_min = lambda(0);
  if (lambda_min < -tol * (1.0 + std::max(lambda_max, 0.0))) {
    throw Error(ErrorKind::NotPsd,
                "smallest eigenvalue " + std::to_string(lambda_min) +
                    " below band");
  }
  if (lambda_min < 0.0) {
    const Matrix& v = solver.eigenvectors();
    sym = v * lambda.cwiseMax(0.0).asDiagonal() * v.transpose();
    sym = 0.5 * (sym + sym.transpose()).eval();
  }
  return SpdMatrix(std::move(sym));
}

/// Principal (PSD) square root through the symmetric eigendecomposition.
inline SpdMatrix spd_sqrt(const SpdMatrix& m) {
  const auto solver = detail::eigen_symmetric(m.matrix());
  const Matrix& v = solver.eigenvectors();
  const Vector root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  Matrix s = v * root.asDiagonal() * v.transpose();
  s = 0.5 * (s + s.transpose()).eval();
  return validate_spd(s);
}

/// Factor L with L * L^T = m, from the clamped eigendecomposition. Unlike a
/// Cholesky factor it exists for singular m.
inline Matrix covariance_factor(const SpdMatrix& m) {
  const auto solver = detail::eigen_symmetric(m.matrix());
  return solver.eigenvectors() *
         solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

class Gaussian {
 public:
  Gaussian(Vector mean, SpdMatrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    detail::require_dims(mean_.size(), cov_.dim(),
                         "Gaussian mean length must match covariance dim");
    detail::require(detail::all_finite(mean_), ErrorKind::NonFinite,
                    "Gaussian mean has non-finite entries");
  }

  Eigen::Index dim() const { return mean_.size(); }
  const Vector& mean() const { return mean_; }
  const SpdMatrix& cov() const { return cov_; }

 private:
  Vector mean_;
  SpdMatrix cov_;
};

/// Point mass at `point`.
class DiracMass {
 public:
  explicit DiracMass(Vector point) : point_(std::move(point)) {
    detail::require(point_.size() > 0, ErrorKind::DimMismatch,
                    "Dirac point is empty");
    detail::require(detail::all_finite(point_), ErrorKind::NonFinite,
                    "Dirac point has non-finite entries");
  }

  static DiracMass origin(Eigen::Index dim) { return DiracMass(Vector::Zero(dim)); }

  Eigen::Index dim() const { return point_.size(); }
  const Vector& point() const { return point_; }

 private:
  Vector point_;
};

/// Draws x = mean + L z with a precomputed factor; reuse it when the same
/// Gaussian is sampled repeatedly.
class GaussianSampler {
 public:
  explicit GaussianSampler(const Gaussian& g)
      : mean_(g.mean()), factor_(covariance_factor(g.cov())) {}

  Vector draw(CounterRng& rng) const {
    Vector z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return mean_ + factor_ * z;
  }

 private:
  Vector mean_;
  Matrix factor_;
};

/// n i.i.d. draws from g. Bit-identical for identical (g, n, seed, stream).
inline std::vector<Vector> sample(const Gaussian& g, std::size_t n,
                                  std::uint64_t seed, std::uint64_t stream = 0) {
  detail::require(n >= 1, ErrorKind::InvalidArgument, "sample count must be >= 1");
  const GaussianSampler sampler(g);
  CounterRng rng(seed, stream);
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sampler.draw(rng));
  return out;
}

struct Moments {
  Vector mean;
  SpdMatrix cov;
};

/// Sample mean and unbiased sample covariance. Deviations are taken from the
/// first sample, so repeated copies of one point yield an exactly zero
/// covariance.
inline Moments empirical_moments(std::span<const Vector> samples) {
  detail::require(samples.size() >= 2, ErrorKind::TooFewSamples,
                  "need at least two samples");
  const Eigen::Index dim = samples.front().size();
  const Vector& anchor = samples.front();
  Vector shift_sum = Vector::Zero(dim);
  for (const Vector& x : samples) {
    detail::require_dims(x.size(), dim, "samples must share a dimension");
    detail::require(detail::all_finite(x), ErrorKind::NonFinite,
                    "sample has non-finite entries");
    shift_sum += x - anchor;
  }
  const double n = static_cast<double>(samples.size());
  const Vector shift_mean = shift_sum / n;

  Matrix scatter = Matrix::Zero(dim, dim);
  for (const Vector& x : samples) {
    const Vector d = (x - anchor) - shift_mean;
    scatter.noalias() += d * d.transpose();
  }
  return {anchor + shift_mean, validate_spd(scatter / (n - 1.0))};
}

}  // namespace w2assim
