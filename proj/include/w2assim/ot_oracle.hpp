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

// Exact discrete optimal transport with squared Euclidean cost, for small
// empirical measures. Used as an independent check of the Gaussian closed
// forms, so both solvers are exact combinatorial methods:
//
//  * equal-size uniform measures: linear assignment by shortest augmenting
//    paths with dual potentials (Hungarian / Jonker-Volgenant family);
//  * general weights: successive shortest paths on the transportation
//    network, augmenting by the path bottleneck.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "w2assim/gaussian_core.hpp"

namespace w2assim {

inline constexpr std::size_t kMaxSupport = 2048;

class DiscreteMeasure {
 public:
  DiscreteMeasure(std::vector<Vector> points, std::vector<double> weights)
      : points_(std::move(points)), weights_(std::move(weights)) {
    detail::require(!points_.empty(), ErrorKind::InvalidArgument,
                    "measure has no points");
    detail::require_dims(static_cast<long>(weights_.size()),
                         static_cast<long>(points_.size()),
                         "one weight per point");
    const Eigen::Index dim = points_.front().size();
    detail::require(dim > 0, ErrorKind::DimMismatch, "points are empty");
    double total = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      detail::require_dims(points_[i].size(), dim, "points must share a dim");
      detail::require(points_[i].allFinite(), ErrorKind::NonFinite,
                      "point has non-finite entries");
      detail::require(std::isfinite(weights_[i]) && weights_[i] >= 0.0,
                      ErrorKind::InvalidArgument, "weights must be nonnegative");
      total += weights_[i];
    }
    detail::require(std::abs(total - 1.0) <= 1e-12, ErrorKind::InvalidArgument,
                    "weights must sum to 1");
  }

  static DiscreteMeasure uniform(std::vector<Vector> points) {
    const std::size_t n = points.size();
    return DiscreteMeasure(std::move(points),
                           std::vector<double>(n, n ? 1.0 / static_cast<double>(n) : 0.0));
  }

  std::size_t size() const { return points_.size(); }
  Eigen::Index dim() const { return points_.front().size(); }
  const std::vector<Vector>& points() const { return points_; }
  const std::vector<double>& weights() const { return weights_; }

  bool is_uniform() const {
    const double w = 1.0 / static_cast<double>(size());
    return std::all_of(weights_.begin(), weights_.end(),
                       [w](double x) { return std::abs(x - w) <= 1e-15; });
  }

 private:
  std::vector<Vector> points_;
  std::vector<double> weights_;
};

struct TransportPlan {
  Matrix coupling;  // rows: source atoms, cols: target atoms
  double cost = 0.0;
};

struct DiscreteW2Result {
  double distance = 0.0;
  TransportPlan plan;
};

/// Squared-distance cost matrix, row-major in a flat buffer.
inline std::vector<double> squared_distance_costs(const DiscreteMeasure& src,
                                                  const DiscreteMeasure& dst) {
  const std::size_t n1 = src.size(), n2 = dst.size();
  std::vector<double> cost(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      cost[i * n2 + j] = (src.points()[i] - dst.points()[j]).squaredNorm();
    }
  }
  return cost;
}

/// Minimum-cost perfect matching on a dense n x n cost matrix (row-major).
/// Returns col_of_row.
inline std::vector<std::size_t> solve_assignment(const std::vector<double>& cost,
                                                 std::size_t n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  // Columns are 1-based; column 0 is a virtual root holding the row being
  // inserted.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), min_slack(n + 1);
  std::vector<std::size_t> row_of_col(n + 1, kNone), prev_col(n + 1, 0);
  std::vector<char> used(n + 1);

  // Warm start: column reduction, then row reduction. Potentials stay
  // feasible and every greedy match is tight, so only the remaining rows need
  // an augmenting path.
  std::vector<char> row_matched(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t arg = 0;
    double best = cost[j];
    for (std::size_t i = 1; i < n; ++i) {
      if (cost[i * n + j] < best) {
        best = cost[i * n + j];
        arg = i;
      }
    }
    v[j + 1] = best;
    if (!row_matched[arg]) {
      row_matched[arg] = 1;
      row_of_col[j + 1] = arg;
    }
  }
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) {
    if (row_matched[i]) continue;
    double best = kInf;
    for (std::size_t j = 0; j < n; ++j) best = std::min(best, cost[i * n + j] - v[j + 1]);
    u[i + 1] = best;
    pending.push_back(i);
  }

  for (const std::size_t row : pending) {
    row_of_col[0] = row;
    std::size_t col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t i0 = row_of_col[col0];
      const double* crow = cost.data() + i0 * n;
      const double ui = u[i0 + 1];
      double delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double slack = crow[j - 1] - ui - v[j];
        if (slack < min_slack[j]) {
          min_slack[j] = slack;
          prev_col[j] = col0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          col1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of_col[j] + 1] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      col0 = col1;
    } while (row_of_col[col0] != kNone);
    // Flip the alternating path back to the root.
    do {
      const std::size_t col1 = prev_col[col0];
      row_of_col[col0] = row_of_col[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<std::size_t> col_of_row(n);
  for (std::size_t j = 1; j <= n; ++j) col_of_row[row_of_col[j]] = j - 1;
  return col_of_row;
}

/// Exact transportation problem by successive shortest paths. `cost` is
/// row-major n1 x n2. Returns the coupling matrix.
inline Matrix solve_transportation(const std::vector<double>& cost,
                                   const std::vector<double>& supply,
                                   const std::vector<double>& demand) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  constexpr double kMassEps = 1e-14;
  const std::size_t n1 = supply.size(), n2 = demand.size(), nodes = n1 + n2;

  Matrix flow = Matrix::Zero(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(n2));
  std::vector<double> left(supply), need(demand);
  std::vector<double> potential(nodes, 0.0), dist(nodes);
  std::vector<std::size_t> parent(nodes);
  std::vector<char> done(nodes);
  constexpr std::size_t kRoot = std::numeric_limits<std::size_t>::max();

  auto any_above = [](const std::vector<double>& xs) {
    return std::any_of(xs.begin(), xs.end(), [](double x) { return x > kMassEps; });
  };

  while (any_above(left) && any_above(need)) {
    // Dijkstra on reduced costs from every source with mass left.
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(done.begin(), done.end(), 0);
    for (std::size_t i = 0; i < n1; ++i) {
      if (left[i] > kMassEps) {
        dist[i] = 0.0;
        parent[i] = kRoot;
      }
    }
    std::size_t target = kRoot;
    for (;;) {
      std::size_t best = kRoot;
      for (std::size_t k = 0; k < nodes; ++k) {
        if (!done[k] && dist[k] < kInf && (best == kRoot || dist[k] < dist[best])) best = k;
      }
      if (best == kRoot) break;
      done[best] = 1;
      if (best >= n1 && need[best - n1] > kMassEps) {
        target = best;
        break;
      }
      if (best < n1) {
        const std::size_t i = best;
        for (std::size_t j = 0; j < n2; ++j) {
          const std::size_t node = n1 + j;
          if (done[node]) continue;
          const double reduced =
              std::max(0.0, cost[i * n2 + j] + potential[i] - potential[node]);
          if (dist[i] + reduced < dist[node]) {
            dist[node] = dist[i] + reduced;
            parent[node] = i;
          }
        }
      } else {
        const std::size_t j = best - n1;
        for (std::size_t i = 0; i < n1; ++i) {
          if (done[i] || flow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) <= 0.0) continue;
          const double reduced =
              std::max(0.0, -cost[i * n2 + j] + potential[best] - potential[i]);
          if (dist[best] + reduced < dist[i]) {
            dist[i] = dist[best] + reduced;
            parent[i] = best;
          }
        }
      }
    }
    if (target == kRoot) {
      throw Error(ErrorKind::InvalidArgument, "transportation problem is infeasible");
    }

    const double reach = dist[target];
    for (std::size_t k = 0; k < nodes; ++k) potential[k] += std::min(dist[k], reach);

    // Bottleneck: remaining supply at the path start, remaining demand at the
    // end, and flow on every backward (sink -> source) edge.
    double amount = need[target - n1];
    std::size_t node = target;
    while (parent[node] != kRoot) {
      const std::size_t from = parent[node];
      if (from >= n1) {
        amount = std::min(amount, flow(static_cast<Eigen::Index>(node),
                                       static_cast<Eigen::Index>(from - n1)));
      }
      node = from;
    }
    amount = std::min(amount, left[node]);

    node = target;
    while (parent[node] != kRoot) {
      const std::size_t from = parent[node];
      if (from < n1) {
        flow(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(node - n1)) += amount;
      } else {
        double& f = flow(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(from - n1));
        f -= amount;
        if (f < kMassEps * 1e-3) f = 0.0;
      }
      node = from;
    }
    left[node] -= amount;
    need[target - n1] -= amount;
  }
  return flow;
}

/// Globally optimal squared-cost transport between two discrete measures.
inline DiscreteW2Result discrete_w2(const DiscreteMeasure& src,
                                    const DiscreteMeasure& dst) {
  detail::require(src.size() <= kMaxSupport && dst.size() <= kMaxSupport,
                  ErrorKind::TooLarge, "support exceeds 2048 points");
  detail::require_dims(src.dim(), dst.dim(), "measures must share a dim");

  const std::size_t n1 = src.size(), n2 = dst.size();
  const auto cost = squared_distance_costs(src, dst);
  DiscreteW2Result result;
  if (n1 == n2 && src.is_uniform() && dst.is_uniform()) {
    const auto match = solve_assignment(cost, n1);
    result.plan.coupling = Matrix::Zero(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(n2));
    for (std::size_t i = 0; i < n1; ++i) {
      result.plan.coupling(static_cast<Eigen::Index>(i),
                           static_cast<Eigen::Index>(match[i])) = src.weights()[i];
    }
  } else {
    result.plan.coupling = solve_transportation(cost, src.weights(), dst.weights());
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      const double mass = result.plan.coupling(static_cast<Eigen::Index>(i),
                                               static_cast<Eigen::Index>(j));
      if (mass != 0.0) total += mass * cost[i * n2 + j];
    }
  }
  result.plan.cost = total;
  result.distance = std::sqrt(total);
  return result;
}

/// Stream ids used by empirical_w2_gaussians for its two independent sample
/// sets.
inline constexpr std::uint64_t kFirstSampleStream = 1;
inline constexpr std::uint64_t kSecondSampleStream = 2;

/// Discrete W2 between n-point uniform samples of two Gaussians.
inline double empirical_w2_gaussians(const Gaussian& g1, const Gaussian& g2,
                                     std::size_t n, std::uint64_t seed) {
  detail::require(n <= kMaxSupport, ErrorKind::TooLarge,
                  "support exceeds 2048 points");
  detail::require_dims(g1.dim(), g2.dim(), "Gaussians must share a dimension");
  auto src = DiscreteMeasure::uniform(sample(g1, n, seed, kFirstSampleStream));
  auto dst = DiscreteMeasure::uniform(sample(g2, n, seed, kSecondSampleStream));
  return discrete_w2(src, dst).distance;
}

}  // namespace w2assim
