#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rfuse/core_model.hpp"

namespace rfuse {

struct GeoMedianConfig {
  double tol = 1e-10;
  int max_iter = 10000;
  // Radius under which an iterate is treated as sitting on a data point.
  // Unset means 1e-12 * (1 + max point norm).
  std::optional<double> anchor_epsilon;
  bool record_objective = false;
};

struct GeoMedianResult {
  Vector median;
  Diagnostics diagnostics;
  // Index of the data point the median coincides with, if any.
  std::optional<std::size_t> anchored_at;
  // True when the minimizer set is a segment (collinear points with an even
  // weight split); the median is then one point of that segment.
  bool non_unique = false;
  std::vector<double> objective_trace;
};

/// G(theta) = sum_k w_k ||p_k - theta||.
double weighted_distance_objective(std::span<const Vector> points, const Vector& weights,
                                   const Vector& theta);

/// Norm of the subgradient optimality residual at `theta`. For a point that
/// coincides with data, returns max(0, ||sum_{k not at theta} ...|| - weight at theta).
double geomedian_optimality_residual(std::span<const Vector> points, const Vector& weights,
                                     const Vector& theta, double coincidence_radius = 0.0);

/// Weighted geometric median by Weiszfeld iteration with the Vardi-Zhang
/// modification at data points. Never throws on slow convergence: the status
/// field reports NotConverged and `median` holds the best iterate.
GeoMedianResult solve_weighted_geometric_median(std::span<const Vector> points,
                                                const Vector& weights,
                                                const GeoMedianConfig& config = {});

/// Identification margin: sum_{K0} w_k - || sum_{not K0} w_k b_k / ||b_k|| ||.
double delta_margin(const Vector& weights, const GroundTruth& truth);

/// Checks ||estimate - theta0|| <= 2/delta * sum_k w_k e_k + slack, the
/// deterministic consistency bound for the weighted geometric median.
/// Throws IdentificationFailure when delta <= 0.
bool consistency_bound_check(const Vector& estimate, const GroundTruth& truth,
                             std::span<const double> per_source_errors, const Vector& weights,
                             double slack = 1e-8);

}  // namespace rfuse
