#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "rfuse/core_model.hpp"

namespace rfuse {

enum class ZeroWeightPolicy {
  ForceZero,  // b_k fixed at zero when the initial bias estimate is exactly zero
  CapWeight,  // adaptive weights clipped at PenaltyConfig::weight_cap
};

struct PenaltyConfig {
  enum class LambdaRule { Explicit, ScaledByN };

  LambdaRule rule = LambdaRule::ScaledByN;
  double lambda_value = 0.0;  // used by Explicit
  double lambda_c = 1.0;      // used by ScaledByN: lambda = c / n
  double alpha = 2.0;
  ZeroWeightPolicy zero_weight_policy = ZeroWeightPolicy::ForceZero;
  double weight_cap = 1e12;

  static PenaltyConfig explicit_lambda(double lambda, double alpha = 2.0);
  static PenaltyConfig scaled_by_n(double c = 1.0, double alpha = 2.0);

  double lambda(std::int64_t total_n) const;
  void validate() const;
};

struct PivwSolverConfig {
  double tol = 1e-8;
  int max_sweeps = 5000;
  // Profiled Newton step on theta after each sweep, accepted only when it
  // lowers the objective.
  bool newton_acceleration = true;
  bool record_objective = false;
};

/// Everything the penalized objective needs, resolved to numbers.
/// adaptive_weights[k] = +inf means b_k is constrained to zero.
struct PenalizedProblem {
  std::vector<Vector> points;
  Vector weights;
  std::vector<Matrix> metrics;
  double lambda = 0.0;
  std::vector<double> adaptive_weights;

  static PenalizedProblem build(const FusionProblem& problem, const Vector& initial,
                                const PenaltyConfig& penalty);

  std::size_t num_sources() const { return points.size(); }
  std::size_t dim() const { return points.empty() ? 0 : static_cast<std::size_t>(points.front().size()); }
  double weight(std::size_t k) const { return weights[static_cast<Eigen::Index>(k)]; }
  // lambda * w_k; infinite for forced-zero blocks.
  double penalty_level(std::size_t k) const;
  bool forced_zero(std::size_t k) const { return std::isinf(adaptive_weights.at(k)); }
  void validate() const;
};

struct KktReport {
  double stationarity_residual_theta = 0.0;
  std::vector<double> per_source_residuals;
  // min over zero blocks of lambda w_k - ||pi_k V_k (theta_k - theta)||;
  // +inf when no finite-weight block is zero.
  double worst_zero_margin = std::numeric_limits<double>::infinity();

  double max_residual() const;
  bool passes(double tol) const { return max_residual() <= tol; }
};

struct PenalizedFit {
  FusionEstimate estimate;
  KktReport kkt;
  double lambda = 0.0;
  std::vector<double> adaptive_weights;
  std::vector<double> objective_trace;  // one entry per sweep when recorded
};

/// Inverse-variance weighted combination over `subset`:
/// (sum pi_k V_k)^{-1} sum pi_k V_k theta_k.
FusionEstimate oracle_ivw(const FusionProblem& problem, std::span<const std::size_t> subset);

/// w_k = ||theta_k - initial||^{-alpha}; +inf where the distance is exactly zero.
std::vector<double> adaptive_weights(const Vector& initial, std::span<const SourceSummary> sources,
                                     double alpha);

double penalized_objective(const PenalizedProblem& problem, const Vector& theta,
                           std::span<const Vector> biases);

KktReport kkt_residual(const PenalizedProblem& problem, const Vector& theta,
                       std::span<const Vector> biases);
KktReport kkt_residual(const FusionProblem& problem, const FusionEstimate& estimate,
                       const PenaltyConfig& penalty, const Vector& initial);

/// Block coordinate descent over (theta, b_1, ..., b_K) with exact zero
/// detection. Converged means the sweep change and every KKT residual are
/// below `config.tol`; otherwise the last iterate is returned as NotConverged.
PenalizedFit solve_penalized_ivw(const PenalizedProblem& problem, const Vector& start,
                                 const PivwSolverConfig& config = {});
PenalizedFit solve_penalized_ivw(const FusionProblem& problem, const Vector& initial,
                                 const PenaltyConfig& penalty, const PivwSolverConfig& config = {});

IndexSet zero_blocks(std::span<const Vector> biases);

}  // namespace rfuse
