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

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"
#include "w2assim/assimilation.hpp"

namespace w2assim {
namespace {

using testing::random_matrix;
using testing::random_system;
using testing::thrown_kind;

Matrix m1(double v) { return Matrix::Constant(1, 1, v); }
SpdMatrix s1(double v) { return validate_spd(m1(v)); }
LinearSensor unit_sensor() { return LinearSensor(m1(1.0), s1(1.0)); }

// Central differences of w2sq_objective, entry by entry.
Matrix finite_difference_gradient(const Matrix& h, const SpdMatrix& sigma,
                                  const LinearSensor& sensor, double step) {
  Matrix g(h.rows(), h.cols());
  for (Eigen::Index i = 0; i < h.rows(); ++i) {
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      Matrix plus = h, minus = h;
      plus(i, j) += step;
      minus(i, j) -= step;
      g(i, j) = (w2sq_objective(plus, sigma, sensor) - w2sq_objective(minus, sigma, sensor)) /
                (2.0 * step);
    }
  }
  return g;
}

TEST(LinearSensor, RejectsSingularNoise) {
  Matrix r = Matrix::Zero(2, 2);
  r(0, 0) = 1.0;
  EXPECT_EQ(thrown_kind([&] { LinearSensor(Matrix::Identity(2, 2), validate_spd(r)); }),
            ErrorKind::NotPositiveDefinite);
  EXPECT_EQ(thrown_kind([] { LinearSensor(Matrix::Identity(3, 2), SpdMatrix::identity(2)); }),
            ErrorKind::DimMismatch);
}

TEST(PosteriorCovGeneral, UnbiasedChoiceReducesToJoseph) {
  CounterRng rng(41, 0);
  const auto sys = random_system(rng, 3, 2);
  const Matrix h = random_matrix(rng, 3, 2);
  const auto maps = UpdateMaps::unbiased(h, sys.sensor);
  const Matrix j = Matrix::Identity(3, 3) - h * sys.sensor.C();
  const Matrix joseph = j * sys.prior_err_cov.matrix() * j.transpose() +
                        h * sys.sensor.R().matrix() * h.transpose();
  const Vector x1 = testing::random_vector(rng, 3);
  const Vector x2 = 1e3 * testing::random_vector(rng, 3);
  const Matrix at_x1 = posterior_cov_general(maps, sys.prior_err_cov, sys.sensor, x1).matrix();
  const Matrix at_x2 = posterior_cov_general(maps, sys.prior_err_cov, sys.sensor, x2).matrix();
  EXPECT_EQ(at_x1, at_x2);  // the state term is annihilated exactly
  EXPECT_LE((at_x1 - joseph).norm(), 1e-12 * joseph.norm());
}

TEST(PosteriorCovGeneral, NoUpdateKeepsPrior) {
  CounterRng rng(42, 0);
  const auto sys = random_system(rng, 3, 2);
  const UpdateMaps maps(Matrix::Identity(3, 3), Matrix::Zero(3, 2));
  const Matrix cov =
      posterior_cov_general(maps, sys.prior_err_cov, sys.sensor, testing::random_vector(rng, 3))
          .matrix();
  EXPECT_LE((cov - sys.prior_err_cov.matrix()).norm(), 1e-14);
}

TEST(PosteriorCovGeneral, ScalarHandEvaluation) {
  const UpdateMaps maps(m1(0.0), m1(0.0));
  EXPECT_DOUBLE_EQ(
      posterior_cov_general(maps, s1(1.0), unit_sensor(), Vector::Constant(1, 2.0))(0, 0), 4.0);
}

TEST(PosteriorCovConstrained, Cases) {
  CounterRng rng(43, 0);
  const auto sys = random_system(rng, 4, 2);
  EXPECT_LE((posterior_cov_constrained(Matrix::Zero(4, 2), sys.prior_err_cov, sys.sensor).matrix() -
             sys.prior_err_cov.matrix()).norm(),
            1e-14);
  EXPECT_DOUBLE_EQ(posterior_cov_constrained(m1(0.5), s1(1.0), unit_sensor())(0, 0), 0.5);
  EXPECT_EQ(thrown_kind([&] { posterior_cov_constrained(Matrix::Zero(3, 2), sys.prior_err_cov, sys.sensor); }),
            ErrorKind::DimMismatch);
}

TEST(PosteriorCovConstrained, KalmanGainIsLocalMinimum) {
  CounterRng rng(44, 0);
  const auto sys = random_system(rng, 4, 2);
  const Matrix k = kalman_gain(sys.prior_err_cov, sys.sensor);
  const double best = posterior_cov_constrained(k, sys.prior_err_cov, sys.sensor).trace();
  for (int i = 0; i < 100; ++i) {
    Matrix delta = random_matrix(rng, 4, 2);
    delta *= 1e-3 / delta.norm();
    EXPECT_LT(best, posterior_cov_constrained(k + delta, sys.prior_err_cov, sys.sensor).trace());
  }
}

TEST(W2sqObjective, ScalarQuadratic) {
  EXPECT_DOUBLE_EQ(w2sq_objective(m1(0.5), s1(1.0), unit_sensor()), 0.5);
  EXPECT_DOUBLE_EQ(w2sq_objective(m1(0.0), s1(1.0), unit_sensor()), 1.0);
  EXPECT_DOUBLE_EQ(w2sq_objective(m1(1.0), s1(1.0), unit_sensor()), 1.0);
  CounterRng rng(45, 0);
  const auto sys = random_system(rng, 3, 2);
  EXPECT_NEAR(w2sq_objective(Matrix::Zero(3, 2), sys.prior_err_cov, sys.sensor),
              sys.prior_err_cov.trace(), 1e-14);
}

TEST(W2sqObjective, GradientMatchesFiniteDifferences) {
  CounterRng rng(46, 0);
  for (int i = 0; i < 10; ++i) {
    const auto sys = random_system(rng, 1 + i % 5, 1 + i % 3);
    const Matrix h = random_matrix(rng, sys.sensor.state_dim(), sys.sensor.measurement_dim());
    const Matrix analytic = w2sq_objective_gradient(h, sys.prior_err_cov, sys.sensor);
    const Matrix numeric = finite_difference_gradient(h, sys.prior_err_cov, sys.sensor, 1e-5);
    EXPECT_LE((analytic - numeric).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(W2sqObjective, Convexity) {
  CounterRng rng(47, 0);
  for (int i = 0; i < 100; ++i) {
    const auto sys = random_system(rng, 1 + i % 6, 1 + i % 4);
    const auto n = sys.sensor.state_dim(), m = sys.sensor.measurement_dim();
    const Matrix h1 = random_matrix(rng, n, m), h2 = random_matrix(rng, n, m);
    const double t = rng.uniform();
    const auto f = [&](const Matrix& h) { return w2sq_objective(h, sys.prior_err_cov, sys.sensor); };
    EXPECT_LE(f(t * h1 + (1 - t) * h2), t * f(h1) + (1 - t) * f(h2) + 1e-9);
  }
}

TEST(KalmanGain, ScalarAndPerfectMeasurement) {
  EXPECT_DOUBLE_EQ(kalman_gain(s1(1.0), unit_sensor())(0, 0), 0.5);
  CounterRng rng(48, 0);
  const SpdMatrix sigma = testing::random_spd(rng, 3);
  const LinearSensor exact(Matrix::Identity(3, 3), validate_spd(1e-10 * Matrix::Identity(3, 3)));
  EXPECT_LE((kalman_gain(sigma, exact) - Matrix::Identity(3, 3)).norm(), 1e-6);
}

TEST(KalmanGain, StationarityResidual) {
  CounterRng rng(49, 0);
  for (int i = 0; i < 50; ++i) {
    const auto sys = random_system(rng, 1 + i % 6, 1 + i % 4);
    const Matrix k = kalman_gain(sys.prior_err_cov, sys.sensor);
    const double scale = sys.prior_err_cov.matrix().norm() * (1.0 + sys.sensor.C().norm());
    EXPECT_LE(stationarity_residual(k, sys.prior_err_cov, sys.sensor), 1e-10 * scale);
  }
}

TEST(KalmanGain, MatchesNumericMinimizerFourByTwo) {
  CounterRng rng(50, 0);
  const auto sys = random_system(rng, 4, 2);
  const Matrix k = kalman_gain(sys.prior_err_cov, sys.sensor);
  const auto numeric = wasserstein_optimal_gain_numeric(sys.prior_err_cov, sys.sensor);
  EXPECT_LE((numeric.gain - k).norm(), 1e-6);
}

TEST(KalmanGain, BeatsRandomGains) {
  CounterRng rng(51, 0);
  for (int s = 0; s < 5; ++s) {
    const auto sys = random_system(rng, 1 + s, 1 + s % 3);
    const auto n = sys.sensor.state_dim(), m = sys.sensor.measurement_dim();
    const double best = w2sq_objective(kalman_gain(sys.prior_err_cov, sys.sensor),
                                       sys.prior_err_cov, sys.sensor);
    for (int i = 0; i < 200; ++i) {
      EXPECT_LE(best, w2sq_objective(random_matrix(rng, n, m), sys.prior_err_cov, sys.sensor) + 1e-12);
    }
  }
}

TEST(NumericGain, ScalarAndTermination) {
  const auto r = wasserstein_optimal_gain_numeric(s1(1.0), unit_sensor());
  EXPECT_NEAR(r.gain(0, 0), 0.5, 1e-8);
  EXPECT_EQ(r.stop, GainSearchStop::GradientTolerance);
  EXPECT_DOUBLE_EQ(r.grad_tol, 2e-10);
  EXPECT_LE(2.0 * stationarity_residual(r.gain, s1(1.0), unit_sensor()), 10.0 * r.grad_tol);
}

TEST(NumericGain, RandomSystemsMatchClosedForm) {
  CounterRng rng(52, 0);
  for (int i = 0; i < 50; ++i) {
    const auto sys = random_system(rng, 1 + i % 6, 1 + (i / 6) % 4);
    const Matrix k = kalman_gain(sys.prior_err_cov, sys.sensor);
    const auto r = wasserstein_optimal_gain_numeric(sys.prior_err_cov, sys.sensor);
    EXPECT_LE((r.gain - k).norm() / (1.0 + k.norm()), 1e-6);
    EXPECT_LE(w2sq_objective_gradient(r.gain, sys.prior_err_cov, sys.sensor).norm(),
              10.0 * r.grad_tol);
  }
}

TEST(NumericGain, ReportsNonConvergence) {
  CounterRng rng(53, 0);
  const auto sys = random_system(rng, 4, 3);
  GainSearchOptions opts;
  opts.max_iters = 2;
  EXPECT_EQ(thrown_kind([&] { wasserstein_optimal_gain_numeric(sys.prior_err_cov, sys.sensor, opts); }),
            ErrorKind::DidNotConverge);
}

TEST(Assimilate, ScalarHandComputation) {
  const Gaussian prior(Vector::Zero(1), s1(1.0));
  const auto r = assimilate(prior, Vector::Constant(1, 2.0), unit_sensor());
  EXPECT_DOUBLE_EQ(r.posterior.mean()(0), 1.0);
  EXPECT_DOUBLE_EQ(r.posterior.cov()(0, 0), 0.5);
  EXPECT_EQ(r.model.mean_bias, Vector::Zero(1));
  EXPECT_DOUBLE_EQ(r.model.w2sq_to_dirac, 0.5);
}

TEST(Assimilate, UninformativeMeasurement) {
  CounterRng rng(54, 0);
  const Gaussian prior = testing::random_gaussian(rng, 3);
  const LinearSensor sensor(random_matrix(rng, 2, 3), validate_spd(1e10 * Matrix::Identity(2, 2)));
  const auto r = assimilate(prior, testing::random_vector(rng, 2), sensor);
  EXPECT_LE((r.posterior.mean() - prior.mean()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((r.posterior.cov().matrix() - prior.cov().matrix()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Assimilate, PosteriorMatchesIndependentJosephEvaluation) {
  CounterRng rng(55, 0);
  for (int i = 0; i < 20; ++i) {
    const auto sys = random_system(rng, 1 + i % 6, 1 + i % 4);
    const Gaussian prior(testing::random_vector(rng, sys.sensor.state_dim()), sys.prior_err_cov);
    const Vector y = testing::random_vector(rng, sys.sensor.measurement_dim());
    const auto r = assimilate(prior, y, sys.sensor);

    const Matrix& c = sys.sensor.C();
    const Matrix& p = prior.cov().matrix();
    const Matrix s = c * p * c.transpose() + sys.sensor.R().matrix();
    const Matrix k = p * c.transpose() * s.inverse();
    const Matrix j = Matrix::Identity(p.rows(), p.cols()) - k * c;
    const Matrix expect = j * p * j.transpose() + k * sys.sensor.R().matrix() * k.transpose();
    EXPECT_LE((r.posterior.cov().matrix() - expect).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + p.norm()));
    EXPECT_LE((r.posterior.mean() - (prior.mean() + k * (y - c * prior.mean()))).norm(),
              1e-10 * (1.0 + y.norm() + prior.mean().norm()));
    EXPECT_LE(r.posterior.cov().trace(), prior.cov().trace());
    EXPECT_NEAR(r.model.w2sq_to_dirac, r.posterior.cov().trace(), 1e-12 * r.posterior.cov().trace());
  }
}

TEST(Assimilate, MonteCarloUnbiasedAndConsistent) {
  CounterRng rng(56, 0);
  const auto sys = random_system(rng, 3, 2);
  const Vector x = testing::random_vector(rng, 3);
  const Matrix h = kalman_gain(sys.prior_err_cov, sys.sensor);
  const SpdMatrix predicted = posterior_cov_constrained(h, sys.prior_err_cov, sys.sensor);

  const GaussianSampler prior_error(Gaussian(Vector::Zero(3), sys.prior_err_cov));
  const GaussianSampler noise(Gaussian(Vector::Zero(2), sys.sensor.R()));
  CounterRng draws(57, 0);
  const int trials = 100000;
  std::vector<Vector> errors;
  errors.reserve(trials);
  for (int t = 0; t < trials; ++t) {
    const Vector prior_mean = x + prior_error.draw(draws);
    const Vector y = sys.sensor.C() * x + noise.draw(draws);
    const auto r = assimilate(Gaussian(prior_mean, sys.prior_err_cov), y, sys.sensor);
    errors.push_back(r.posterior.mean() - x);
  }
  const auto moments = empirical_moments(errors);
  EXPECT_LE(moments.mean.norm(), 3.0 * std::sqrt(predicted.trace() / trials));
  const Matrix& p = predicted.matrix();
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      const double se = std::sqrt((p(i, i) * p(j, j) + p(i, j) * p(i, j)) / (trials - 1));
      EXPECT_LE(std::abs(moments.cov(i, j) - p(i, j)), 5.0 * se) << i << "," << j;
    }
  }
}

}  // namespace
}  // namespace w2assim
