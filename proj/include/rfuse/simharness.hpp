#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rfuse/core_model.hpp"
#include "rfuse/geomedian.hpp"
#include "rfuse/pivw.hpp"

namespace rfuse {

enum class DesignFamily { Linear, Logistic, MrRatio, MedianCounterexample };
enum class EstimatorKind { Naive, Oracle, Initial, Penalized, Refit };

const char* to_string(DesignFamily family) noexcept;
const char* to_string(EstimatorKind kind) noexcept;

struct MrSurrogate {
  double beta_mean = 0.03;
  double beta_sd = 0.01;
  double beta_floor = 0.005;     // |beta_bar| is kept at or above this
  double negative_fraction = 0.35;  // share of invalid instruments with negative beta_bar
  double sigma1 = 0.003;
  double sigma2 = 0.005;
  double drop_epsilon = 1e-3;    // instruments with |beta_tilde| below this are dropped
  int instruments = 160;
  int invalid = 100;
  double theta0 = 1.0;
};

struct SimDesign {
  std::string name = "custom";
  DesignFamily family = DesignFamily::Linear;
  int d = 3;
  int K = 10;
  int n_star = 500;
  double bias_scale = 1.0;
  int replicates = 200;
  std::uint64_t seed = 1;
  std::vector<EstimatorKind> estimators = {EstimatorKind::Naive, EstimatorKind::Oracle,
                                           EstimatorKind::Initial, EstimatorKind::Penalized,
                                           EstimatorKind::Refit};
  WeightingKind weighting = WeightingKind::Identity;

  double noise_sd = 1.0;        // Linear; 0 gives noiseless responses
  double logistic_ridge = 1e-4;  // on the mean log-likelihood
  MrSurrogate mr;

  // MedianCounterexample
  int total_n = 10000;
  double tau = 0.1;

  void validate() const;

  /// Named presets: table1 .. table5, counterexample.
  static SimDesign named(const std::string& name);
};

/// The 3 x 10 bias pattern used by the regression designs.
Matrix bias_matrix_B();

/// Column k of 1_{K/10}^T (x) 1_{d/3} (x) B, times `scale`.
std::vector<Vector> regression_biases(int d, int K, double scale);

/// Independent generator for (seed, replicate, stream); different tuples give
/// statistically unrelated sequences.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream);

struct SimSample {
  std::vector<SourceSummary> sources;
  GroundTruth truth;
  int retries = 0;
  std::vector<std::string> warnings;
};

SimSample dgp_linear(const SimDesign& design, std::mt19937_64& rng);
SimSample dgp_logistic(const SimDesign& design, std::mt19937_64& rng);

/// Fixed per-design instrument strengths (same for every replicate).
std::vector<double> mr_beta_bar(const SimDesign& design);
SimSample dgp_mr(const SimDesign& design, std::span<const double> beta_bar, std::mt19937_64& rng);
SimSample dgp_mr(const SimDesign& design, std::mt19937_64& rng);

/// h* = Phi^{-1}((3/8 + tau/4) / (1/2 + tau)).
double counterexample_h_star(double tau);

struct CounterexampleResult {
  int K = 0;
  int total_n = 0;
  double tau = 0.0;
  int replicates = 0;
  double h_star = 0.0;
  double threshold = 0.0;  // sqrt(K) h* / sqrt(n)
  double exceedance = 0.0;
};

CounterexampleResult counterexample_median(int K, int total_n, double tau, int replicates,
                                           std::uint64_t seed, int threads = 1);

struct SimOptions {
  PenaltyConfig penalty;
  PivwSolverConfig solver;
  GeoMedianConfig geomedian;
  double level = 0.95;
  int threads = 1;
};

struct EstimatorMetrics {
  EstimatorKind estimator = EstimatorKind::Naive;
  double nb = 0.0;
  double sse = 0.0;
  std::optional<double> selection_rate;
  double equiv_dist = 0.0;
  std::optional<double> coverage;
  int failures = 0;
};

struct ReplicateRecord {
  bool ok = false;  // data generation succeeded
  std::string error;
  int retries = 0;
  Vector theta0;
  std::vector<std::optional<Vector>> estimates;  // aligned with design.estimators
  std::vector<std::optional<int>> covered;       // coordinates covered, per estimator
  std::optional<bool> selection_exact;
  std::optional<double> delta;
  std::optional<bool> bound_holds;
};

struct SimResult {
  SimDesign design;
  double lambda_c = 0.0;
  std::vector<EstimatorMetrics> metrics;
  std::vector<ReplicateRecord> records;
  int generation_failures = 0;
  int retries = 0;
  int bound_checked = 0;
  int bound_violations = 0;

  const EstimatorMetrics& at(EstimatorKind kind) const;
};

/// Runs every replicate of `design` and summarizes each estimator. Results do
/// not depend on `options.threads`.
SimResult run_replications(const SimDesign& design, const SimOptions& options = {});

// Metrics CSV: design fields, estimator, NB, SSE, selection_rate, equiv_dist,
// coverage, failures.
std::string metrics_csv_header();
std::string metrics_csv_rows(const SimResult& result);
std::string metrics_table(const SimResult& result);

std::string counterexample_csv(const CounterexampleResult& result);

}  // namespace rfuse
