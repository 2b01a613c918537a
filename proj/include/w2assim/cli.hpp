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

// Command-line front end. Subcommands: w2, gain, assimilate, filter, mc,
// verify. Exit status: 0 success, 1 validation or usage error, 2 numerical
// failure.

#pragma once

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "w2assim/assimilation.hpp"
#include "w2assim/filter_sim.hpp"
#include "w2assim/ot_oracle.hpp"
#include "w2assim/scenario_io.hpp"
#include "w2assim/wasserstein.hpp"

namespace w2assim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;

/// Relative Frobenius gap allowed between the numeric and closed-form gains.
inline constexpr double kGainGapTolerance = 1e-6;

/// Shortest round-trip decimal, with ".0" appended to integral values.
inline std::string format_number(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, end);
  if (std::isfinite(x) && s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

inline std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    const char* first = item.data();
    const char* last = item.data() + item.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || item.empty()) {
      throw Error(ErrorKind::InvalidArgument, "cannot parse number '" + item + "' in " + what);
    }
    out.push_back(v);
  }
  if (out.empty()) throw Error(ErrorKind::InvalidArgument, what + " is empty");
  return out;
}

inline Vector to_vector(const std::vector<double>& xs) {
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

/// Parses {"mean=a,b", "cov=..."}; cov is n*n row-major entries or n
/// diagonal entries.
inline Gaussian parse_gaussian(const std::vector<std::string>& tokens, const std::string& what) {
  std::optional<std::vector<double>> mean, cov;
  for (const auto& tok : tokens) {
    const auto eq = tok.find('=');
    const std::string key = tok.substr(0, eq);
    const std::string value = eq == std::string::npos ? "" : tok.substr(eq + 1);
    if (key == "mean") {
      mean = parse_list(value, what + " mean");
    } else if (key == "cov") {
      cov = parse_list(value, what + " cov");
    } else {
      throw Error(ErrorKind::InvalidArgument, what + ": expected mean=... or cov=..., got '" + tok + "'");
    }
  }
  if (!mean || !cov) throw Error(ErrorKind::InvalidArgument, what + " needs both mean= and cov=");
  const auto n = static_cast<Eigen::Index>(mean->size());
  Matrix c;
  if (static_cast<Eigen::Index>(cov->size()) == n * n) {
    c = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        cov->data(), n, n);
  } else if (static_cast<Eigen::Index>(cov->size()) == n) {
    c = to_vector(*cov).asDiagonal();
  } else {
    throw Error(ErrorKind::DimMismatch, what + " cov needs n*n or n entries");
  }
  return Gaussian(to_vector(*mean), validate_spd(c));
}

struct VerifyCase {
  std::string name;
  Gaussian g1;
  Gaussian g2;
};

/// Fixed Gaussian pairs used by `verify` and the coupling-consistency
/// acceptance check. One pair has non-commuting covariances.
inline std::vector<VerifyCase> verify_cases() {
  auto gauss = [](std::initializer_list<double> mean, const Matrix& cov) {
    return Gaussian(to_vector(std::vector<double>(mean)), validate_spd(cov));
  };
  auto m1 = [](double v) { return Matrix::Constant(1, 1, v); };
  Matrix s1(2, 2), s2(2, 2), s3(2, 2);
  s1 << 2, 1, 1, 2;
  s2 << 1, 0, 0, 3;
  s3 << 1.5, -0.4, -0.4, 0.8;
  return {
      {"1d-shift", gauss({0.0}, m1(1.0)), gauss({3.0}, m1(1.0))},
      {"1d-scale-shift", gauss({0.0}, m1(4.0)), gauss({1.0}, m1(1.0))},
      {"2d-diagonal", gauss({0.0, 0.0}, Matrix::Identity(2, 2)),
       gauss({2.0, 1.0}, Vector(Eigen::Vector2d(2.0, 0.5)).asDiagonal())},
      {"2d-noncommuting", gauss({0.0, 0.0}, s1), gauss({1.0, -1.0}, s2)},
      {"2d-correlated", gauss({-1.0, 0.5}, s3), gauss({1.0, 1.0}, s1)},
  };
}

struct VerifyOutcome {
  std::string name;
  double closed_form = 0.0;
  double empirical_mean = 0.0;
  double relative_gap = 0.0;
};

inline VerifyOutcome verify_case(const VerifyCase& c, std::size_t n, std::size_t seeds,
                                 std::uint64_t base_seed) {
  VerifyOutcome out;
  out.name = c.name;
  out.closed_form = w2_gaussian(c.g1, c.g2);
  double total = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) total += empirical_w2_gaussians(c.g1, c.g2, n, base_seed + s);
  out.empirical_mean = total / static_cast<double>(seeds);
  out.relative_gap = std::abs(out.empirical_mean - out.closed_form) / out.closed_form;
  return out;
}

namespace detail {

inline void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path);
  if (!file) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
  file << text;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using io::Json;
  CLI::App app{"Wasserstein-optimal data assimilation toolkit", "w2assim"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format = "csv";
  app.add_option("--seed", seed, "Master seed (overrides the scenario seed)");
  app.add_option("--out", out_path, "Write tabular output to this path");
  app.add_option("--format", format, "Tabular output format")
      ->check(CLI::IsMember({"csv", "json"}));

  auto* w2 = app.add_subcommand("w2", "W2 distance between Gaussians or to a point mass");
  std::vector<std::string> g1_tokens, g2_tokens;
  std::string dirac_point;
  w2->add_option("--g1", g1_tokens, "mean=... cov=...")->expected(2)->required();
  auto* g2_opt = w2->add_option("--g2", g2_tokens, "mean=... cov=...")->expected(2);
  auto* dirac_opt = w2->add_option("--dirac", dirac_point, "Point mass location a,b,...");
  g2_opt->excludes(dirac_opt);
  bool squared = false;
  w2->add_flag("--squared", squared, "Print W2^2 instead of W2");

  std::string scenario_path;
  auto* gain = app.add_subcommand("gain", "Closed-form Wasserstein-optimal gain");
  gain->add_option("--scenario", scenario_path)->required();
  bool check_numeric = false;
  gain->add_flag("--check-numeric", check_numeric, "Compare against the gradient-descent gain");

  auto* assim = app.add_subcommand("assimilate", "One measurement update of prior0");
  assim->add_option("--scenario", scenario_path)->required();
  std::string measurement;
  assim->add_option("--y", measurement, "Measurement a,b,... (default: simulated from x0_true)");

  auto* filter = app.add_subcommand("filter", "Run one filter realization");
  filter->add_option("--scenario", scenario_path)->required();

  auto* mc = app.add_subcommand("mc", "Monte Carlo filter validation");
  mc->add_option("--scenario", scenario_path)->required();
  std::optional<std::size_t> trials;
  unsigned workers = 1;
  mc->add_option("--trials", trials)->check(CLI::PositiveNumber);
  mc->add_option("--workers", workers)->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "Cross-check closed forms against exact discrete OT");
  std::size_t verify_n = 1000, verify_seeds = 10;
  double verify_tol = 0.05;
  verify->add_option("--n", verify_n, "Samples per measure")->check(CLI::Range(1, 2048));
  verify->add_option("--seeds", verify_seeds, "Seeds averaged per pair")->check(CLI::PositiveNumber);
  verify->add_option("--tolerance", verify_tol, "Relative tolerance");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("w2assim");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitValidation;
  }

  try {
    auto scenario = [&] {
      Scenario sc = io::load_scenario(scenario_path);
      if (seed) sc.seed = *seed;
      return sc;
    };

    if (*w2) {
      const Gaussian g1 = parse_gaussian(g1_tokens, "--g1");
      double value = 0.0;
      if (!g2_tokens.empty()) {
        const Gaussian g2 = parse_gaussian(g2_tokens, "--g2");
        value = squared ? w2sq_gaussian(g1, g2) : w2_gaussian(g1, g2);
      } else if (!dirac_point.empty()) {
        const DiracMass d(to_vector(parse_list(dirac_point, "--dirac")));
        value = squared ? w2sq_dirac_trace_form(g1, d) : w2_gaussian_dirac(g1, d);
      } else {
        throw Error(ErrorKind::InvalidArgument, "w2 needs --g2 or --dirac");
      }
      out << format_number(value) << "\n";
      return kExitOk;
    }

    if (*gain) {
      const Scenario sc = scenario();
      const Matrix h = kalman_gain(sc.prior0.cov(), sc.sensor);
      Json doc{{"gain", io::to_json(h)},
               {"stationarity_residual", stationarity_residual(h, sc.prior0.cov(), sc.sensor)},
               {"w2sq_objective", w2sq_objective(h, sc.prior0.cov(), sc.sensor)}};
      int code = kExitOk;
      if (check_numeric) {
        const auto numeric = wasserstein_optimal_gain_numeric(sc.prior0.cov(), sc.sensor);
        const double gap = (numeric.gain - h).norm() / (1.0 + h.norm());
        doc["numeric"] = {{"gain", io::to_json(numeric.gain)},
                          {"iterations", numeric.iterations},
                          {"grad_norm", numeric.grad_norm}};
        doc["relative_gap"] = gap;
        doc["pass"] = gap <= kGainGapTolerance;
        if (gap > kGainGapTolerance) code = kExitNumerical;
      }
      out << doc.dump(2) << "\n";
      return code;
    }

    if (*assim) {
      const Scenario sc = scenario();
      Vector y;
      if (!measurement.empty()) {
        y = to_vector(parse_list(measurement, "--y"));
      } else {
        CounterRng rng(sc.seed, 0);
        const GaussianSampler noise(
            Gaussian(Vector::Zero(sc.sensor.measurement_dim()), sc.sensor.R()));
        y = sc.sensor.C() * sc.x0_true + noise.draw(rng);
      }
      const auto result = assimilate(sc.prior0, y, sc.sensor);
      Json doc{{"measurement", io::to_json(y)},
               {"gain", io::to_json(result.gain)},
               {"posterior", {{"mean", io::to_json(result.posterior.mean())},
                              {"cov", io::to_json(result.posterior.cov().matrix())}}},
               {"w2sq_to_dirac", result.model.w2sq_to_dirac},
               {"prior_w2sq_to_dirac", sc.prior0.cov().trace()}};
      out << doc.dump(2) << "\n";
      return kExitOk;
    }

    if (*filter) {
      const Scenario sc = scenario();
      const auto records = run_filter(sc);
      std::ostringstream text;
      if (format == "json") {
        text << io::records_to_json(records).dump(2) << "\n";
      } else {
        text << io::csv_header(sc.state_dim(), sc.sensor.measurement_dim()) << "\n";
        io::write_csv_rows(text, 0, records);
      }
      detail::emit(text.str(), out_path, out);
      return kExitOk;
    }

    if (*mc) {
      Scenario sc = scenario();
      if (trials) sc.trials = *trials;
      std::ostringstream table;
      Json per_trial = Json::array();
      const bool want_table = !out_path.empty();
      if (want_table && format == "csv") {
        table << io::csv_header(sc.state_dim(), sc.sensor.measurement_dim()) << "\n";
      }
      const auto summary = run_monte_carlo(
          sc, workers, [&](std::size_t t, const std::vector<StepRecord>& records) {
            if (!want_table) return;
            if (format == "csv") {
              io::write_csv_rows(table, t, records);
            } else {
              per_trial.push_back({{"trial", t}, {"records", io::records_to_json(records)}});
            }
          });
      if (want_table) {
        detail::emit(format == "csv" ? table.str() : per_trial.dump(2) + "\n", out_path, out);
      }
      out << io::summary_to_json(summary).dump(2) << "\n";
      return kExitOk;
    }

    if (*verify) {
      bool ok = true;
      const std::uint64_t base = seed.value_or(0);
      // Exact-solver self check: assignment against permutation search.
      for (std::size_t k = 0; k < 20; ++k) {
        CounterRng rng(base + 1000 + k, 0);
        const std::size_t n = 2 + k % 5;
        std::vector<Vector> a, b;
        for (std::size_t i = 0; i < n; ++i) {
          a.push_back(Eigen::Vector2d(rng.normal(), rng.normal()));
          b.push_back(Eigen::Vector2d(rng.normal(), rng.normal()));
        }
        const auto cost = squared_distance_costs(DiscreteMeasure::uniform(a),
                                                 DiscreteMeasure::uniform(b));
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
          double c = 0.0;
          for (std::size_t i = 0; i < n; ++i) c += cost[i * n + perm[i]];
          best = std::min(best, c / static_cast<double>(n));
        } while (std::next_permutation(perm.begin(), perm.end()));
        const double got = discrete_w2(DiscreteMeasure::uniform(a), DiscreteMeasure::uniform(b)).plan.cost;
        if (std::abs(got - best) > 1e-9 * (1.0 + best)) ok = false;
      }
      out << (ok ? "PASS" : "FAIL") << " assignment vs permutation search (20 cases)\n";
      for (const auto& c : verify_cases()) {
        const auto r = verify_case(c, verify_n, verify_seeds, base);
        const bool pass = r.relative_gap <= verify_tol;
        ok = ok && pass;
        out << (pass ? "PASS " : "FAIL ") << r.name << " closed=" << format_number(r.closed_form)
            << " empirical=" << format_number(r.empirical_mean)
            << " rel_gap=" << format_number(r.relative_gap) << "\n";
      }
      return ok ? kExitOk : kExitNumerical;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_numerical(e.kind()) ? kExitNumerical : kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace w2assim::cli
