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

// Sequential filtering harness: linear-Gaussian propagation between
// measurement updates, single realizations and Monte Carlo batches.
//
// Each realization draws its randomness from one counter-based stream, so
// trial k depends only on (seed, k). A Monte Carlo trial additionally draws
// the initial estimate as x0_true + e0 with e0 ~ N(0, prior0.cov), which is
// what makes the prior estimate unbiased across trials; a single filter run
// starts from prior0.mean as given.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "w2assim/assimilation.hpp"
#include "w2assim/gaussian_core.hpp"
#include "w2assim/rng.hpp"
#include "w2assim/wasserstein.hpp"

namespace w2assim {

struct Scenario {
  Matrix A;
  SpdMatrix Q;
  LinearSensor sensor;
  Vector x0_true;
  Gaussian prior0;
  std::size_t steps = 1;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::string label;

  Eigen::Index state_dim() const { return A.rows(); }

  void validate() const {
    const auto n = sensor.state_dim();
    detail::require(A.rows() == A.cols(), ErrorKind::InvalidScenario, "A must be square");
    detail::require(A.allFinite(), ErrorKind::NonFinite, "A has non-finite entries");
    detail::require(A.rows() == n && Q.dim() == n && x0_true.size() == n &&
                        prior0.dim() == n,
                    ErrorKind::InvalidScenario, "scenario dims are inconsistent");
    detail::require(x0_true.allFinite(), ErrorKind::NonFinite,
                    "x0_true has non-finite entries");
    detail::require(steps >= 1, ErrorKind::InvalidScenario, "steps must be >= 1");
    detail::require(trials >= 1, ErrorKind::InvalidScenario, "trials must be >= 1");
  }
};

struct StepRecord {
  std::size_t step = 0;
  Vector true_state;
  Vector measurement;
  Vector prior_mean;
  Matrix prior_cov;
  double prior_cov_trace = 0.0;
  Vector post_mean;
  Matrix post_cov;
  double post_cov_trace = 0.0;
  double w2_prior_to_dirac = 0.0;
  double w2_post_to_dirac = 0.0;
};

/// N(A mu, A Sigma A^T + Q).
inline Gaussian predict(const Gaussian& belief, const Matrix& a, const SpdMatrix& q) {
  detail::require(a.rows() == a.cols(), ErrorKind::DimMismatch, "A must be square");
  detail::require_dims(a.cols(), belief.dim(), "A must match belief dim");
  detail::require_dims(q.dim(), belief.dim(), "Q must match belief dim");
  const Matrix cov = a * belief.cov().matrix() * a.transpose() + q.matrix();
  return Gaussian(a * belief.mean(), validate_spd(cov));
}

namespace detail {

// W2 of an unbiased error belief N(0, cov) to the zero-error point mass.
inline double error_w2_to_dirac(const SpdMatrix& cov) {
  return w2_gaussian_dirac(Gaussian(Vector::Zero(cov.dim()), cov),
                           DiracMass::origin(cov.dim()));
}

inline std::vector<StepRecord> simulate(const Scenario& sc, std::uint64_t stream,
                                        bool draw_initial_error) {
  sc.validate();
  const auto n = sc.state_dim();
  const auto m = sc.sensor.measurement_dim();
  CounterRng rng(sc.seed, stream);
  const GaussianSampler process_noise(Gaussian(Vector::Zero(n), sc.Q));
  const GaussianSampler measurement_noise(Gaussian(Vector::Zero(m), sc.sensor.R()));

  Gaussian belief = sc.prior0;
  if (draw_initial_error) {
    const GaussianSampler initial_error(Gaussian(Vector::Zero(n), sc.prior0.cov()));
    belief = Gaussian(sc.x0_true + initial_error.draw(rng), sc.prior0.cov());
  }
  Vector x = sc.x0_true;

  std::vector<StepRecord> records;
  records.reserve(sc.steps);
  for (std::size_t k = 0; k < sc.steps; ++k) {
    if (k > 0) {
      x = sc.A * x + process_noise.draw(rng);
      belief = predict(belief, sc.A, sc.Q);
    }
    Vector y = sc.sensor.C() * x + measurement_noise.draw(rng);
    auto update = assimilate(belief, y, sc.sensor);

    StepRecord rec;
    rec.step = k;
    rec.true_state = x;
    rec.measurement = std::move(y);
    rec.prior_mean = belief.mean();
    rec.prior_cov = belief.cov().matrix();
    rec.prior_cov_trace = belief.cov().trace();
    rec.post_mean = update.posterior.mean();
    rec.post_cov = update.posterior.cov().matrix();
    rec.post_cov_trace = update.posterior.cov().trace();
    rec.w2_prior_to_dirac = error_w2_to_dirac(belief.cov());
    rec.w2_post_to_dirac = error_w2_to_dirac(update.posterior.cov());
    records.push_back(std::move(rec));
    belief = std::move(update.posterior);
  }
  return records;
}

}  // namespace detail

/// One realization starting from prior0 as given, on stream 0.
inline std::vector<StepRecord> run_filter(const Scenario& scenario) {
  return detail::simulate(scenario, 0, false);
}

/// Monte Carlo trial `trial`: stream id = trial index, with a random initial
/// estimate error drawn from prior0.cov.
inline std::vector<StepRecord> run_trial(const Scenario& scenario, std::size_t trial) {
  return detail::simulate(scenario, trial, true);
}

struct StepDiagnostic {
  std::size_t step = 0;
  double empirical_w2sq = 0.0;  // mean over trials of |e+|^2
  double predicted_w2sq = 0.0;  // tr of the filter's posterior covariance
};

struct MonteCarloSummary {
  std::string label;
  std::size_t steps = 0;
  std::size_t trials = 0;
  Vector empirical_mean;
  Matrix empirical_cov;
  Matrix predicted_cov;
  double empirical_w2sq = 0.0;
  double predicted_w2sq = 0.0;
  std::vector<StepDiagnostic> per_step;
};

/// Aggregates per-trial records, indexed by trial. Summation runs in trial
/// index order regardless of how the trials were produced.
inline MonteCarloSummary summarize_trials(const Scenario& scenario,
                                          const std::vector<std::vector<StepRecord>>& trials) {
  detail::require(!trials.empty(), ErrorKind::InvalidArgument, "no trials to summarize");
  MonteCarloSummary out;
  out.label = scenario.label;
  out.steps = scenario.steps;
  out.trials = trials.size();

  const auto& reference = trials.front();
  std::vector<Vector> final_errors;
  final_errors.reserve(trials.size());
  out.per_step.resize(reference.size());
  for (std::size_t k = 0; k < reference.size(); ++k) {
    out.per_step[k].step = k;
    out.per_step[k].predicted_w2sq = reference[k].post_cov_trace;
  }
  for (const auto& records : trials) {
    detail::require_dims(static_cast<long>(records.size()),
                         static_cast<long>(reference.size()),
                         "trials must have equal length");
    for (std::size_t k = 0; k < records.size(); ++k) {
      out.per_step[k].empirical_w2sq +=
          (records[k].post_mean - records[k].true_state).squaredNorm();
    }
    final_errors.push_back(records.back().post_mean - records.back().true_state);
  }
  const double count = static_cast<double>(trials.size());
  for (auto& d : out.per_step) d.empirical_w2sq /= count;

  if (final_errors.size() >= 2) {
    auto moments = empirical_moments(final_errors);
    out.empirical_mean = std::move(moments.mean);
    out.empirical_cov = moments.cov.matrix();
  } else {
    out.empirical_mean = final_errors.front();
    out.empirical_cov = Matrix::Zero(scenario.state_dim(), scenario.state_dim());
  }
  out.predicted_cov = reference.back().post_cov;
  out.empirical_w2sq = out.per_step.back().empirical_w2sq;
  out.predicted_w2sq = out.per_step.back().predicted_w2sq;
  return out;
}

/// Runs scenario.trials realizations on up to `workers` threads. The result
/// does not depend on the worker count. `on_trial` (optional) sees every
/// trial's records in trial order after all trials finish.
inline MonteCarloSummary run_monte_carlo(
    const Scenario& scenario, unsigned workers = 1,
    const std::function<void(std::size_t, const std::vector<StepRecord>&)>& on_trial = {}) {
  scenario.validate();
  std::vector<std::vector<StepRecord>> trials(scenario.trials);
  workers = std::clamp<unsigned>(workers, 1u, static_cast<unsigned>(
                                                  std::min<std::size_t>(scenario.trials, 64)));
  if (workers == 1) {
    for (std::size_t t = 0; t < trials.size(); ++t) trials[t] = run_trial(scenario, t);
  } else {
    std::vector<std::exception_ptr> failures(workers);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t t = w; t < trials.size(); t += workers) {
              trials[t] = run_trial(scenario, t);
            }
          } catch (...) {
            failures[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }
  if (on_trial) {
    for (std::size_t t = 0; t < trials.size(); ++t) on_trial(t, trials[t]);
  }
  return summarize_trials(scenario, trials);
}

}  // namespace w2assim
