#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfuse/error.hpp"

namespace rfuse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexSet = std::vector<std::size_t>;

/// One source's summary: its estimate, sample size and (optionally) the
/// finite-sample covariance of that estimate.
struct SourceSummary {
  std::string id;
  Vector theta;
  std::int64_t n = 1;
  std::optional<Matrix> cov;
};

/// Throws InvalidProblem / NonSpdCovariance when the summary breaks its invariants.
void validate_source(const SourceSummary& source);

enum class WeightingKind { Identity, InverseCovariance, Explicit };

const char* to_string(WeightingKind kind) noexcept;

struct WeightingScheme {
  WeightingKind kind = WeightingKind::Identity;
  std::vector<Matrix> matrices;  // only for Explicit

  static WeightingScheme identity() { return {}; }
  static WeightingScheme inverse_covariance() {
    return {WeightingKind::InverseCovariance, {}};
  }
  static WeightingScheme explicit_matrices(std::vector<Matrix> m) {
    return {WeightingKind::Explicit, std::move(m)};
  }
};

/// pi_k = n_k / sum_j n_j.
Vector compute_weights(std::span<const SourceSummary> sources);

/// The K sources plus the weight vector and the weighting-matrix choice.
/// Immutable once constructed; the constructor validates every invariant.
class FusionProblem {
 public:
  explicit FusionProblem(std::vector<SourceSummary> sources,
                         WeightingScheme weighting = WeightingScheme::identity());

  // Weights supplied directly rather than derived from sample sizes.
  FusionProblem(std::vector<SourceSummary> sources, Vector weights,
                WeightingScheme weighting = WeightingScheme::identity());

  const std::vector<SourceSummary>& sources() const { return sources_; }
  const SourceSummary& source(std::size_t k) const { return sources_.at(k); }
  const Vector& weights() const { return weights_; }
  const WeightingScheme& weighting() const { return weighting_; }
  std::size_t num_sources() const { return sources_.size(); }
  std::size_t dim() const { return dim_; }
  std::int64_t total_n() const { return total_n_; }
  bool has_all_covariances() const;

  std::vector<Vector> points() const;

  FusionProblem with_weighting(WeightingScheme weighting) const;

 private:
  void validate();

  std::vector<SourceSummary> sources_;
  Vector weights_;
  WeightingScheme weighting_;
  std::size_t dim_ = 0;
  std::int64_t total_n_ = 0;
};

/// Per-source weighting matrices V_k. InverseCovariance gives (n_k cov_k)^{-1},
/// i.e. the inverse of the per-observation asymptotic covariance.
std::vector<Matrix> resolve_weighting_matrices(const FusionProblem& problem);

/// Simulation-only truth: theta0, per-source biases and the unbiased index set.
struct GroundTruth {
  Vector theta0;
  std::vector<Vector> biases;
  IndexSet unbiased_set;

  /// Builds the truth, deriving the unbiased set from the exact-zero biases.
  static GroundTruth from_biases(Vector theta0, std::vector<Vector> biases);

  Vector source_limit(std::size_t k) const { return theta0 + biases.at(k); }
  void validate() const;
};

enum class SolveStatus { Converged, NotConverged };

const char* to_string(SolveStatus status) noexcept;

struct Diagnostics {
  SolveStatus status = SolveStatus::Converged;
  int iterations = 0;
  double residual = 0.0;
  double objective = 0.0;
};

struct FusionEstimate {
  Vector theta;
  std::optional<std::vector<Vector>> biases;
  std::optional<IndexSet> selected;
  Diagnostics diagnostics;

  bool converged() const { return diagnostics.status == SolveStatus::Converged; }
};

// Small numerical helpers shared across modules.
bool is_symmetric(const Matrix& m, double rel_tol = 1e-10);
bool is_spd(const Matrix& m);
Matrix symmetrize(const Matrix& m);

}  // namespace rfuse
