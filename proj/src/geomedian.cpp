#include "rfuse/geomedian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rfuse {
namespace {

void check_inputs(std::span<const Vector> points, const Vector& weights) {
  if (points.empty()) fail(ErrorCode::InvalidProblem, "geometric median of zero points");
  if (static_cast<std::size_t>(weights.size()) != points.size()) {
    fail(ErrorCode::InvalidProblem, "weights and points differ in length");
  }
  const auto d = points.front().size();
  for (const auto& p : points) {
    if (p.size() != d) fail(ErrorCode::InvalidProblem, "points differ in dimension");
    if (!p.allFinite()) fail(ErrorCode::InvalidProblem, "non-finite point");
  }
  if (!(weights.array() > 0.0).all()) fail(ErrorCode::InvalidProblem, "weights must be positive");
  if (std::abs(weights.sum() - 1.0) > 1e-9) fail(ErrorCode::InvalidProblem, "weights must sum to one");
}

struct PullAt {
  Vector pull;          // sum over non-coincident k of w_k (p_k - y) / ||p_k - y||
  double mass_at = 0.0; // weight of points within the coincidence radius
};

PullAt pull_at(std::span<const Vector> points, const Vector& weights, const Vector& y,
               double radius) {
  PullAt out{Vector::Zero(y.size()), 0.0};
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Vector diff = points[k] - y;
    const double dist = diff.norm();
    const double w = weights[static_cast<Eigen::Index>(k)];
    if (dist <= radius) {
      out.mass_at += w;
    } else {
      out.pull += w * diff / dist;
    }
  }
  return out;
}

// Minimizer set is a segment only when all points are collinear and some gap
// between consecutive points along the line splits the weight exactly in half.
bool minimizer_is_segment(std::span<const Vector> points, const Vector& weights) {
  if (points.size() < 2) return false;
  const auto d = points.front().size();
  const auto K = static_cast<Eigen::Index>(points.size());
  Matrix centered(d, K);
  Vector centroid = Vector::Zero(d);
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(K);
  for (Eigen::Index k = 0; k < K; ++k) centered.col(k) = points[static_cast<std::size_t>(k)] - centroid;
  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinU);
  const Vector sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return false;
  if (sv.size() > 1 && sv[1] > 1e-12 * sv[0]) return false;
  const Vector axis = svd.matrixU().col(0);

  std::vector<std::pair<double, double>> proj;
  proj.reserve(points.size());
  for (Eigen::Index k = 0; k < K; ++k) {
    proj.emplace_back(axis.dot(centered.col(k)), weights[k]);
  }
  std::sort(proj.begin(), proj.end());
  const double gap_tol = 1e-12 * (std::abs(proj.front().first) + std::abs(proj.back().first) + 1.0);
  double cumulative = 0.0;
  for (std::size_t i = 0; i + 1 < proj.size(); ++i) {
    cumulative += proj[i].second;
    if (proj[i + 1].first - proj[i].first > gap_tol && std::abs(cumulative - 0.5) <= 1e-12) {
      return true;
    }
  }
  return false;
}

}  // namespace

double weighted_distance_objective(std::span<const Vector> points, const Vector& weights,
                                   const Vector& theta) {
  double g = 0.0;
  for (std::size_t k = 0; k < points.size(); ++k) {
    g += weights[static_cast<Eigen::Index>(k)] * (points[k] - theta).norm();
  }
  return g;
}

double geomedian_optimality_residual(std::span<const Vector> points, const Vector& weights,
                                     const Vector& theta, double coincidence_radius) {
  const PullAt p = pull_at(points, weights, theta, coincidence_radius);
  return std::max(0.0, p.pull.norm() - p.mass_at);
}

GeoMedianResult solve_weighted_geometric_median(std::span<const Vector> points,
                                                const Vector& weights,
                                                const GeoMedianConfig& config) {
  check_inputs(points, weights);
  if (!(config.tol > 0.0) || config.max_iter < 1) {
    fail(ErrorCode::InvalidProblem, "geometric median tolerance and iteration cap must be positive");
  }
  double max_norm = 0.0;
  for (const auto& p : points) max_norm = std::max(max_norm, p.norm());
  const double eps = config.anchor_epsilon.value_or(1e-12 * (1.0 + max_norm));
  if (!(eps > 0.0)) fail(ErrorCode::InvalidProblem, "anchor epsilon must be positive");

  GeoMedianResult result;
  result.non_unique = minimizer_is_segment(points, weights);

  Vector y = Vector::Zero(points.front().size());
  for (std::size_t k = 0; k < points.size(); ++k) y += weights[static_cast<Eigen::Index>(k)] * points[k];

  double objective = weighted_distance_objective(points, weights, y);
  if (config.record_objective) result.objective_trace.push_back(objective);
  Vector best = y;
  double best_objective = objective;

  auto finish = [&](const Vector& at, SolveStatus status, int iters, double residual,
                    std::optional<std::size_t> anchor) {
    result.median = at;
    result.anchored_at = anchor;
    result.diagnostics.status = status;
    result.diagnostics.iterations = iters;
    result.diagnostics.residual = residual;
    result.diagnostics.objective = weighted_distance_objective(points, weights, at);
    return result;
  };

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    std::size_t nearest = 0;
    double nearest_dist = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double dist = (points[k] - y).norm();
      if (dist < nearest_dist) {
        nearest_dist = dist;
        nearest = k;
      }
    }

    Vector next;
    if (nearest_dist <= eps) {
      // Sitting on a data point: anchored optimality test, else Vardi-Zhang step.
      const PullAt p = pull_at(points, weights, points[nearest], eps);
      const double r = p.pull.norm();
      if (r <= p.mass_at + config.tol) {
        return finish(points[nearest], SolveStatus::Converged, iter,
                      std::max(0.0, r - p.mass_at), nearest);
      }
      Vector num = Vector::Zero(y.size());
      double den = 0.0;
      for (std::size_t k = 0; k < points.size(); ++k) {
        const double dist = (points[k] - y).norm();
        if (dist <= eps) continue;
        const double w = weights[static_cast<Eigen::Index>(k)] / dist;
        num += w * points[k];
        den += w;
      }
      const Vector t = num / den;
      const double ratio = std::min(1.0, p.mass_at / r);
      next = (1.0 - ratio) * t + ratio * y;
    } else {
      const PullAt here = pull_at(points, weights, y, 0.0);
      if (here.pull.norm() <= config.tol) {
        return finish(y, SolveStatus::Converged, iter, here.pull.norm(), std::nullopt);
      }
      // The optimum may sit exactly on the nearest point; test it directly.
      const PullAt there = pull_at(points, weights, points[nearest], eps);
      if (there.pull.norm() <= there.mass_at + config.tol) {
        return finish(points[nearest], SolveStatus::Converged, iter,
                      std::max(0.0, there.pull.norm() - there.mass_at), nearest);
      }
      Vector num = Vector::Zero(y.size());
      double den = 0.0;
      for (std::size_t k = 0; k < points.size(); ++k) {
        const double w = weights[static_cast<Eigen::Index>(k)] / (points[k] - y).norm();
        num += w * points[k];
        den += w;
      }
      next = num / den;
      // Weiszfeld crawls when the optimum sits just off a data point; try a
      // Newton step on the smooth objective and keep whichever point is lower.
      const auto dim = y.size();
      Matrix hess = Matrix::Zero(dim, dim);
      for (std::size_t k = 0; k < points.size(); ++k) {
        const Vector diff = points[k] - y;
        const double dist = diff.norm();
        const Vector u = diff / dist;
        hess += weights[static_cast<Eigen::Index>(k)] / dist *
                (Matrix::Identity(dim, dim) - u * u.transpose());
      }
      Eigen::LDLT<Matrix> ldlt(hess);
      if (ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all()) {
        const Vector newton = y + ldlt.solve(here.pull);
        if (newton.allFinite() && weighted_distance_objective(points, weights, newton) <
                                      weighted_distance_objective(points, weights, next)) {
          next = newton;
        }
      }
    }

    y = next;
    objective = weighted_distance_objective(points, weights, y);
    if (config.record_objective) result.objective_trace.push_back(objective);
    if (objective < best_objective) {
      best_objective = objective;
      best = y;
    }
  }

  return finish(best, SolveStatus::NotConverged, config.max_iter,
                geomedian_optimality_residual(points, weights, best, eps), std::nullopt);
}

double delta_margin(const Vector& weights, const GroundTruth& truth) {
  truth.validate();
  if (static_cast<std::size_t>(weights.size()) != truth.biases.size()) {
    fail(ErrorCode::InvalidGroundTruth, "ground truth and weights differ in length");
  }
  double unbiased_mass = 0.0;
  Vector pull = Vector::Zero(truth.theta0.size());
  for (std::size_t k = 0; k < truth.biases.size(); ++k) {
    const double w = weights[static_cast<Eigen::Index>(k)];
    const double norm = truth.biases[k].norm();
    if (norm == 0.0) {
      unbiased_mass += w;
    } else {
      pull += w * truth.biases[k] / norm;
    }
  }
  return unbiased_mass - pull.norm();
}

bool consistency_bound_check(const Vector& estimate, const GroundTruth& truth,
                             std::span<const double> per_source_errors, const Vector& weights,
                             double slack) {
  const double delta = delta_margin(weights, truth);
  if (!(delta > 0.0)) {
    fail(ErrorCode::IdentificationFailure, "identification margin delta is not positive");
  }
  if (per_source_errors.size() != truth.biases.size()) {
    fail(ErrorCode::InvalidGroundTruth, "one error per source is required");
  }
  double weighted = 0.0;
  for (std::size_t k = 0; k < per_source_errors.size(); ++k) {
    weighted += weights[static_cast<Eigen::Index>(k)] * per_source_errors[k];
  }
  return (estimate - truth.theta0).norm() <= 2.0 / delta * weighted + slack;
}

}  // namespace rfuse
