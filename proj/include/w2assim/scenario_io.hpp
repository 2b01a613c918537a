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

// Scenario documents (JSON, version "w2assim-scenario/1"), per-step CSV and
// summary JSON.
//
// Scenario layout; matrices are arrays of rows:
//
//   {
//     "version": "w2assim-scenario/1",
//     "label": "scalar",
//     "A": [[1.0]], "Q": [[0.1]],
//     "sensor": {"C": [[1.0]], "R": [[0.5]]},
//     "x0_true": [0.0],
//     "prior0": {"mean": [0.0], "cov": [[1.0]]},
//     "steps": 10, "trials": 1000, "seed": 42
//   }

#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "w2assim/filter_sim.hpp"

namespace w2assim::io {

using Json = nlohmann::json;

inline constexpr const char* kScenarioVersion = "w2assim-scenario/1";

namespace detail {

[[noreturn]] inline void invalid(const std::string& what) {
  throw Error(ErrorKind::InvalidScenario, what);
}

inline const Json& field(const Json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) invalid(std::string("missing field '") + key + "'");
  return obj.at(key);
}

inline double number(const Json& j, const std::string& where) {
  if (!j.is_number()) invalid(where + " must be a number");
  return j.get<double>();
}

}  // namespace detail

inline Vector vector_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) detail::invalid(where + " must be a non-empty array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = detail::number(j[i], where);
  }
  return v;
}

inline Matrix matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
    detail::invalid(where + " must be a non-empty array of rows");
  }
  const std::size_t rows = j.size(), cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) detail::invalid(where + " rows must have equal length");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = detail::number(j[r][c], where);
    }
  }
  return m;
}

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json to_json(const Matrix& m) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

inline Scenario scenario_from_json(const Json& doc) {
  if (!doc.is_object()) detail::invalid("scenario must be a JSON object");
  const Json& version = detail::field(doc, "version");
  if (!version.is_string() || version.get<std::string>() != kScenarioVersion) {
    detail::invalid(std::string("version must be \"") + kScenarioVersion + "\"");
  }
  const Json& sensor = detail::field(doc, "sensor");
  const Json& prior = detail::field(doc, "prior0");
  auto count = [&](const char* key) -> std::uint64_t {
    const Json& j = detail::field(doc, key);
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
      detail::invalid(std::string(key) + " must be a nonnegative integer");
    }
    return j.get<std::uint64_t>();
  };
  std::string label;
  if (doc.contains("label")) {
    if (!doc["label"].is_string()) detail::invalid("label must be a string");
    label = doc["label"].get<std::string>();
  }
  Scenario sc{
      matrix_from_json(detail::field(doc, "A"), "A"),
      validate_spd(matrix_from_json(detail::field(doc, "Q"), "Q")),
      LinearSensor(matrix_from_json(detail::field(sensor, "C"), "sensor.C"),
                   validate_spd(matrix_from_json(detail::field(sensor, "R"), "sensor.R"))),
      vector_from_json(detail::field(doc, "x0_true"), "x0_true"),
      Gaussian(vector_from_json(detail::field(prior, "mean"), "prior0.mean"),
               validate_spd(matrix_from_json(detail::field(prior, "cov"), "prior0.cov"))),
      static_cast<std::size_t>(count("steps")),
      static_cast<std::size_t>(count("trials")),
      count("seed"),
      std::move(label),
  };
  sc.validate();
  return sc;
}

inline Scenario parse_scenario(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    detail::invalid(std::string("malformed JSON: ") + e.what());
  }
  return scenario_from_json(doc);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) detail::invalid("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

inline Json scenario_to_json(const Scenario& sc) {
  return Json{
      {"version", kScenarioVersion},
      {"label", sc.label},
      {"A", to_json(sc.A)},
      {"Q", to_json(sc.Q.matrix())},
      {"sensor", {{"C", to_json(sc.sensor.C())}, {"R", to_json(sc.sensor.R().matrix())}}},
      {"x0_true", to_json(sc.x0_true)},
      {"prior0", {{"mean", to_json(sc.prior0.mean())}, {"cov", to_json(sc.prior0.cov().matrix())}}},
      {"steps", sc.steps},
      {"trials", sc.trials},
      {"seed", sc.seed},
  };
}

/// 17 significant digits.
inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string csv_header(Eigen::Index n, Eigen::Index m) {
  std::string h = "trial,step";
  auto cols = [&](const char* prefix, Eigen::Index k) {
    for (Eigen::Index i = 0; i < k; ++i) h += std::string(",") + prefix + std::to_string(i);
  };
  cols("true_", n);
  cols("meas_", m);
  cols("prior_mean_", n);
  cols("post_mean_", n);
  h += ",prior_trace,post_trace,w2_prior,w2_post";
  return h;
}

inline void write_csv_rows(std::ostream& out, std::size_t trial,
                           const std::vector<StepRecord>& records) {
  for (const auto& r : records) {
    out << trial << ',' << r.step;
    auto put = [&](const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << format_g17(v(i));
    };
    put(r.true_state);
    put(r.measurement);
    put(r.prior_mean);
    put(r.post_mean);
    out << ',' << format_g17(r.prior_cov_trace) << ',' << format_g17(r.post_cov_trace)
        << ',' << format_g17(r.w2_prior_to_dirac) << ',' << format_g17(r.w2_post_to_dirac)
        << '\n';
  }
}

inline Json records_to_json(const std::vector<StepRecord>& records) {
  Json out = Json::array();
  for (const auto& r : records) {
    out.push_back({{"step", r.step},
                   {"true_state", to_json(r.true_state)},
                   {"measurement", to_json(r.measurement)},
                   {"prior_mean", to_json(r.prior_mean)},
                   {"prior_cov_trace", r.prior_cov_trace},
                   {"post_mean", to_json(r.post_mean)},
                   {"post_cov_trace", r.post_cov_trace},
                   {"w2_prior_to_dirac", r.w2_prior_to_dirac},
                   {"w2_post_to_dirac", r.w2_post_to_dirac}});
  }
  return out;
}

inline Json summary_to_json(const MonteCarloSummary& s) {
  Json per_step = Json::array();
  for (const auto& d : s.per_step) {
    per_step.push_back({{"step", d.step},
                        {"empirical_w2sq", d.empirical_w2sq},
                        {"predicted_w2sq", d.predicted_w2sq}});
  }
  return Json{
      {"label", s.label},
      {"steps", s.steps},
      {"trials", s.trials},
      {"empirical_mean", to_json(s.empirical_mean)},
      {"empirical_cov", to_json(s.empirical_cov)},
      {"predicted_cov", to_json(s.predicted_cov)},
      {"w2_final",
       {{"empirical_w2sq", s.empirical_w2sq},
        {"predicted_w2sq", s.predicted_w2sq},
        {"empirical", std::sqrt(s.empirical_w2sq)},
        {"predicted", std::sqrt(s.predicted_w2sq)}}},
      {"per_step", std::move(per_step)},
  };
}

}  // namespace w2assim::io
