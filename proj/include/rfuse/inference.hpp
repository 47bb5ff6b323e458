#pragma once

#include <span>
#include <utility>
#include <vector>

#include "rfuse/core_model.hpp"

namespace rfuse {

struct WaldResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

struct InferenceReport {
  Matrix cov_hat;
  double level = 0.95;
  std::vector<std::pair<double, double>> intervals;  // one per coordinate
  std::vector<WaldResult> wald_stats;
};

/// Sandwich covariance of the fused estimate treating `selected` as fixed:
/// (1/n) V0^{-1} (sum_sel pi_k V_k S_k V_k) V0^{-1}, with S_k = n_k cov_k and
/// V0 = sum_sel pi_k V_k.
Matrix estimate_covariance(const FusionProblem& problem, std::span<const std::size_t> selected);

/// theta[coord] -/+ z_{(1+level)/2} sqrt(cov[coord, coord]).
std::pair<double, double> wald_interval(const Vector& theta, const Matrix& cov, std::size_t coord,
                                        double level = 0.95);

/// Chi-square test of W theta = null with rank(W) degrees of freedom.
WaldResult wald_test(const Vector& theta, const Matrix& cov, const Matrix& contrast,
                     const Vector& null_value);

/// Covariance plus all per-coordinate intervals.
InferenceReport make_inference_report(const FusionProblem& problem, const Vector& theta,
                                      std::span<const std::size_t> selected, double level = 0.95);

}  // namespace rfuse
