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

// Measurement update posed as minimizing the W2 distance between the
// posterior-error density and the point mass at zero error.
//
// Model: y = C x + n, n ~ N(0, R); posterior estimate x+ = G x- + H y;
// errors e- = x- - x (zero mean, covariance Sigma), e+ = x+ - x. With the
// constraint G = I - HC the posterior error is unbiased and
//
//   Cov(e+) = (I - HC) Sigma (I - HC)^T + H R H^T,
//
// so W2^2(p(e+), delta_0) = tr Cov(e+), a convex quadratic in H whose
// stationary point H (C Sigma C^T + R) = Sigma C^T is the Kalman gain.

#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

#include "w2assim/gaussian_core.hpp"
#include "w2assim/wasserstein.hpp"

namespace w2assim {

/// Linear sensor y = C x + n with noise covariance R. R must be strictly
/// positive definite so that the innovation covariance is invertible.
class LinearSensor {
 public:
  LinearSensor(Matrix c, SpdMatrix r) : c_(std::move(c)), r_(std::move(r)) {
    detail::require(c_.rows() > 0 && c_.cols() > 0, ErrorKind::DimMismatch,
                    "measurement matrix is empty");
    detail::require(c_.allFinite(), ErrorKind::NonFinite,
                    "measurement matrix has non-finite entries");
    detail::require_dims(c_.rows(), r_.dim(),
                         "noise covariance dim must match measurement rows");
    const auto solver = detail::eigen_symmetric(r_.matrix());
    const Vector& lambda = solver.eigenvalues();
    if (!(lambda(0) > 1e-12 * lambda(lambda.size() - 1))) {
      throw Error(ErrorKind::NotPositiveDefinite,
                  "noise covariance must be strictly positive definite");
    }
  }

  Eigen::Index state_dim() const { return c_.cols(); }
  Eigen::Index measurement_dim() const { return c_.rows(); }
  const Matrix& C() const { return c_; }
  const SpdMatrix& R() const { return r_; }

 private:
  Matrix c_;
  SpdMatrix r_;
};

/// The pair (G, H) in x+ = G x- + H y.
class UpdateMaps {
 public:
  UpdateMaps(Matrix g, Matrix h) : g_(std::move(g)), h_(std::move(h)) {
    detail::require(g_.rows() == g_.cols(), ErrorKind::DimMismatch,
                    "G must be square");
    detail::require_dims(h_.rows(), g_.rows(), "H rows must match G");
    detail::require(g_.allFinite() && h_.allFinite(), ErrorKind::NonFinite,
                    "update maps have non-finite entries");
  }

  /// G = I - HC.
  static UpdateMaps unbiased(const Matrix& h, const LinearSensor& sensor) {
    return UpdateMaps(identity_minus_hc(h, sensor), h);
  }

  static Matrix identity_minus_hc(const Matrix& h, const LinearSensor& sensor) {
    const Eigen::Index n = sensor.state_dim();
    return Matrix::Identity(n, n) - h * sensor.C();
  }

  const Matrix& G() const { return g_; }
  const Matrix& H() const { return h_; }

 private:
  Matrix g_;
  Matrix h_;
};

/// Moments of the posterior error and its squared W2 distance to the point
/// mass at the origin.
struct PosteriorErrorModel {
  Vector mean_bias;
  SpdMatrix cov;
  double w2sq_to_dirac;

  static PosteriorErrorModel from_moments(Vector bias, SpdMatrix cov) {
    const double w2sq = w2sq_dirac_trace_form(Gaussian(bias, cov),
                                              DiracMass::origin(bias.size()));
    return {std::move(bias), std::move(cov), w2sq};
  }
};

namespace detail {

inline void require_system(const Matrix& h, const SpdMatrix& prior_err_cov,
                           const LinearSensor& sensor) {
  require_dims(prior_err_cov.dim(), sensor.state_dim(),
               "prior error covariance dim must match state dim");
  require_dims(h.rows(), sensor.state_dim(), "H rows must match state dim");
  require_dims(h.cols(), sensor.measurement_dim(),
               "H cols must match measurement dim");
  require(h.allFinite(), ErrorKind::NonFinite, "H has non-finite entries");
}

inline Matrix innovation_cov(const SpdMatrix& prior_err_cov,
                             const LinearSensor& sensor) {
  return sensor.C() * prior_err_cov.matrix() * sensor.C().transpose() +
         sensor.R().matrix();
}

}  // namespace detail

/// Cov(e+) for arbitrary (G, H), assuming zero-mean prior error uncorrelated
/// with the noise:
///   G Sigma G^T + (G + HC - I) x x^T (G + HC - I)^T + H R H^T.
inline SpdMatrix posterior_cov_general(const UpdateMaps& maps,
                                       const SpdMatrix& prior_err_cov,
                                       const LinearSensor& sensor,
                                       const Vector& true_state) {
  detail::require_system(maps.H(), prior_err_cov, sensor);
  detail::require_dims(true_state.size(), sensor.state_dim(),
                       "true state dim must match state dim");
  const Matrix& g = maps.G();
  const Matrix& h = maps.H();
  // G + HC - I, formed as G - (I - HC) so that G = I - HC gives exact zeros.
  const Matrix state_leak = g - UpdateMaps::identity_minus_hc(h, sensor);
  const Vector leak = state_leak * true_state;
  const Matrix cov = g * prior_err_cov.matrix() * g.transpose() +
                     leak * leak.transpose() +
                     h * sensor.R().matrix() * h.transpose();
  return validate_spd(cov);
}

/// Cov(e+) under G = I - HC. Evaluated in the Joseph form and in the expanded
/// form Sigma + H S H^T - H C Sigma - Sigma C^T H^T (S the innovation
/// covariance); the two must agree to 1e-10 relative to the term magnitudes.
inline SpdMatrix posterior_cov_constrained(const Matrix& h,
                                           const SpdMatrix& prior_err_cov,
                                           const LinearSensor& sensor) {
  detail::require_system(h, prior_err_cov, sensor);
  const Matrix& sigma = prior_err_cov.matrix();
  const Matrix j = UpdateMaps::identity_minus_hc(h, sensor);
  const Matrix joseph =
      j * sigma * j.transpose() + h * sensor.R().matrix() * h.transpose();

  const Matrix hs_ht = h * detail::innovation_cov(prior_err_cov, sensor) * h.transpose();
  const Matrix hc_sigma = h * sensor.C() * sigma;
  const Matrix expanded = sigma + hs_ht - hc_sigma - hc_sigma.transpose();

  const double scale = sigma.norm() + hs_ht.norm() + 2.0 * hc_sigma.norm();
  const double gap = (joseph - expanded).norm();
  if (gap > 1e-10 * scale) {
    throw Error(ErrorKind::InconsistentForms,
                "Joseph and expanded posterior covariance differ by " +
                    std::to_string(gap));
  }
  return validate_spd(joseph);
}

/// W2^2 from the posterior-error density to the zero-error point mass, for
/// gain H under G = I - HC. The bias vanishes, so this is tr Cov(e+).
inline double w2sq_objective(const Matrix& h, const SpdMatrix& prior_err_cov,
                             const LinearSensor& sensor) {
  return posterior_cov_constrained(h, prior_err_cov, sensor).trace();
}

/// d/dH tr Cov(e+) = 2 (H S - Sigma C^T).
inline Matrix w2sq_objective_gradient(const Matrix& h,
                                      const SpdMatrix& prior_err_cov,
                                      const LinearSensor& sensor) {
  detail::require_system(h, prior_err_cov, sensor);
  return 2.0 * (h * detail::innovation_cov(prior_err_cov, sensor) -
                prior_err_cov.matrix() * sensor.C().transpose());
}

/// Frobenius norm of H S - Sigma C^T; zero exactly at the optimal gain.
inline double stationarity_residual(const Matrix& h,
                                    const SpdMatrix& prior_err_cov,
                                    const LinearSensor& sensor) {
  return 0.5 * w2sq_objective_gradient(h, prior_err_cov, sensor).norm();
}

/// Closed-form minimizer H* = Sigma C^T (C Sigma C^T + R)^{-1}, obtained by a
/// Cholesky solve of S H*^T = C Sigma.
inline Matrix kalman_gain(const SpdMatrix& prior_err_cov, const LinearSensor& sensor) {
  detail::require_dims(prior_err_cov.dim(), sensor.state_dim(),
                       "prior error covariance dim must match state dim");
  const Matrix s = detail::innovation_cov(prior_err_cov, sensor);
  const Eigen::LLT<Matrix> llt(0.5 * (s + s.transpose()));
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-15)) {
    throw Error(ErrorKind::SingularInnovation,
                "innovation covariance is numerically singular");
  }
  const Matrix c_sigma = sensor.C() * prior_err_cov.matrix();
  return llt.solve(c_sigma).transpose();
}

struct GainSearchOptions {
  /// Gradient Frobenius norm at which to stop; unset means
  /// 1e-10 * (1 + tr Sigma).
  std::optional<double> grad_tol;
  std::size_t max_iters = 10000;
  double armijo = 1e-4;
  double backtrack = 0.5;
};

enum class GainSearchStop { GradientTolerance, MaxIterations };

struct GainSearchResult {
  Matrix gain;
  std::size_t iterations = 0;
  double grad_norm = 0.0;
  double grad_tol = 0.0;
  GainSearchStop stop = GainSearchStop::GradientTolerance;
};

/// Minimizes w2sq_objective over H by gradient descent from H = 0 with
/// Armijo backtracking. Trial steps start from the Barzilai-Borwein length of
/// the previous iterate pair. The decrease test uses the exact change of the
/// quadratic, <D, grad> + tr(D S D^T), so it stays meaningful once the
/// objective itself has converged to machine precision.
///
/// Throws DidNotConverge when max_iters is reached above tolerance.
inline GainSearchResult wasserstein_optimal_gain_numeric(
    const SpdMatrix& prior_err_cov, const LinearSensor& sensor,
    const GainSearchOptions& opts = {}) {
  detail::require_dims(prior_err_cov.dim(), sensor.state_dim(),
                       "prior error covariance dim must match state dim");
  const double tol = opts.grad_tol.value_or(1e-10 * (1.0 + prior_err_cov.trace()));
  detail::require(tol > 0.0, ErrorKind::InvalidArgument, "grad_tol must be positive");

  const Matrix s = detail::innovation_cov(prior_err_cov, sensor);
  const auto change = [&](const Matrix& step, const Matrix& grad) {
    return (step.cwiseProduct(grad)).sum() + (step * s).cwiseProduct(step).sum();
  };

  GainSearchResult result;
  result.grad_tol = tol;
  Matrix h = Matrix::Zero(sensor.state_dim(), sensor.measurement_dim());
  Matrix grad = w2sq_objective_gradient(h, prior_err_cov, sensor);
  double trial = 1.0 / (2.0 * s.norm());
  for (std::size_t iter = 0;; ++iter) {
    const double gnorm = grad.norm();
    result.iterations = iter;
    result.grad_norm = gnorm;
    if (gnorm <= tol) {
      result.stop = GainSearchStop::GradientTolerance;
      break;
    }
    if (iter == opts.max_iters) {
      result.stop = GainSearchStop::MaxIterations;
      result.gain = h;
      throw Error(ErrorKind::DidNotConverge,
                  "gradient norm " + std::to_string(gnorm) + " above " +
                      std::to_string(tol) + " after " + std::to_string(iter) +
                      " iterations");
    }
    double alpha = trial;
    Matrix step = -alpha * grad;
    while (change(step, grad) > -opts.armijo * alpha * gnorm * gnorm) {
      alpha *= opts.backtrack;
      step = -alpha * grad;
      if (alpha == 0.0) break;
    }
    h += step;
    const Matrix next_grad = w2sq_objective_gradient(h, prior_err_cov, sensor);
    const Matrix dgrad = next_grad - grad;
    const double curvature = step.cwiseProduct(dgrad).sum();
    trial = curvature > 0.0 ? step.squaredNorm() / curvature : 2.0 * alpha;
    grad = next_grad;
  }
  result.gain = h;
  return result;
}

struct Assimilation {
  Gaussian posterior;
  PosteriorErrorModel model;
  Matrix gain;
};

/// Wasserstein-optimal linear update of a Gaussian prior with one
/// measurement. The prior covariance doubles as the prior error covariance.
inline Assimilation assimilate(const Gaussian& prior, const Vector& measurement,
                               const LinearSensor& sensor) {
  detail::require_dims(prior.dim(), sensor.state_dim(),
                       "prior dim must match state dim");
  detail::require_dims(measurement.size(), sensor.measurement_dim(),
                       "measurement dim must match sensor");
  detail::require(measurement.allFinite(), ErrorKind::NonFinite,
                  "measurement has non-finite entries");
  Matrix h = kalman_gain(prior.cov(), sensor);
  const Vector innovation = measurement - sensor.C() * prior.mean();
  Vector mean = prior.mean() + h * innovation;
  SpdMatrix cov = posterior_cov_constrained(h, prior.cov(), sensor);
  auto model = PosteriorErrorModel::from_moments(Vector::Zero(prior.dim()), cov);
  return {Gaussian(std::move(mean), std::move(cov)), std::move(model), std::move(h)};
}

}  // namespace w2assim
