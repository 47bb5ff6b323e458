#include "rfuse/pivw.hpp"

#include <algorithm>
#include <cmath>

#include "rfuse/group_prox.hpp"

namespace rfuse {

PenaltyConfig PenaltyConfig::explicit_lambda(double lambda, double alpha) {
  PenaltyConfig p;
  p.rule = LambdaRule::Explicit;
  p.lambda_value = lambda;
  p.alpha = alpha;
  return p;
}

PenaltyConfig PenaltyConfig::scaled_by_n(double c, double alpha) {
  PenaltyConfig p;
  p.rule = LambdaRule::ScaledByN;
  p.lambda_c = c;
  p.alpha = alpha;
  return p;
}

void PenaltyConfig::validate() const {
  if (!(alpha > 0.0)) fail(ErrorCode::InvalidProblem, "alpha must be positive");
  if (rule == LambdaRule::Explicit && !(lambda_value >= 0.0)) {
    fail(ErrorCode::InvalidProblem, "lambda must be nonnegative");
  }
  if (rule == LambdaRule::ScaledByN && !(lambda_c > 0.0)) {
    fail(ErrorCode::InvalidProblem, "lambda constant c must be positive");
  }
  if (zero_weight_policy == ZeroWeightPolicy::CapWeight && !(weight_cap > 0.0)) {
    fail(ErrorCode::InvalidProblem, "weight cap must be positive");
  }
}

double PenaltyConfig::lambda(std::int64_t total_n) const {
  validate();
  if (rule == LambdaRule::Explicit) return lambda_value;
  return lambda_c / static_cast<double>(total_n);
}

double PenalizedProblem::penalty_level(std::size_t k) const {
  if (forced_zero(k)) return std::numeric_limits<double>::infinity();
  return lambda * adaptive_weights.at(k);
}

void PenalizedProblem::validate() const {
  const std::size_t K = points.size();
  if (K == 0) fail(ErrorCode::InvalidProblem, "penalized problem has no sources");
  if (static_cast<std::size_t>(weights.size()) != K || metrics.size() != K ||
      adaptive_weights.size() != K) {
    fail(ErrorCode::InvalidProblem, "penalized problem components differ in length");
  }
  const auto d = points.front().size();
  for (std::size_t k = 0; k < K; ++k) {
    if (points[k].size() != d || metrics[k].rows() != d || metrics[k].cols() != d) {
      fail(ErrorCode::InvalidProblem, "penalized problem dimension mismatch");
    }
    if (!(weights[static_cast<Eigen::Index>(k)] > 0.0)) {
      fail(ErrorCode::InvalidProblem, "source weights must be positive");
    }
    if (!(adaptive_weights[k] >= 0.0)) {
      fail(ErrorCode::InvalidProblem, "adaptive weights must be nonnegative");
    }
  }
  if (!(lambda >= 0.0) || std::isinf(lambda)) fail(ErrorCode::InvalidProblem, "lambda must be finite and >= 0");
}

PenalizedProblem PenalizedProblem::build(const FusionProblem& problem, const Vector& initial,
                                         const PenaltyConfig& penalty) {
  penalty.validate();
  if (static_cast<std::size_t>(initial.size()) != problem.dim()) {
    fail(ErrorCode::InvalidProblem, "initial estimate has the wrong dimension");
  }
  PenalizedProblem out;
  out.points = problem.points();
  out.weights = problem.weights();
  out.metrics = resolve_weighting_matrices(problem);
  out.lambda = penalty.lambda(problem.total_n());
  out.adaptive_weights = rfuse::adaptive_weights(initial, problem.sources(), penalty.alpha);
  if (penalty.zero_weight_policy == ZeroWeightPolicy::CapWeight) {
    for (auto& w : out.adaptive_weights) w = std::min(w, penalty.weight_cap);
  }
  return out;
}

FusionEstimate oracle_ivw(const FusionProblem& problem, std::span<const std::size_t> subset) {
  if (subset.empty()) fail(ErrorCode::InvalidProblem, "oracle IVW needs a nonempty subset");
  const auto metrics = resolve_weighting_matrices(problem);
  const auto d = static_cast<Eigen::Index>(problem.dim());
  Matrix lhs = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (auto k : subset) {
    if (k >= problem.num_sources()) fail(ErrorCode::InvalidProblem, "subset index out of range");
    const Matrix piv = problem.weights()[static_cast<Eigen::Index>(k)] * metrics[k];
    lhs += piv;
    rhs += piv * problem.source(k).theta;
  }
  Eigen::LLT<Matrix> llt(lhs);
  if (llt.info() != Eigen::Success) fail(ErrorCode::SingularSystem, "aggregate weighting matrix is singular");
  FusionEstimate est;
  est.theta = llt.solve(rhs);
  est.selected = IndexSet(subset.begin(), subset.end());
  std::sort(est.selected->begin(), est.selected->end());
  return est;
}

std::vector<double> adaptive_weights(const Vector& initial, std::span<const SourceSummary> sources,
                                     double alpha) {
  if (!(alpha > 0.0)) fail(ErrorCode::InvalidProblem, "alpha must be positive");
  std::vector<double> out;
  out.reserve(sources.size());
  for (const auto& s : sources) {
    const double dist = (s.theta - initial).norm();
    out.push_back(dist == 0.0 ? std::numeric_limits<double>::infinity() : std::pow(dist, -alpha));
  }
  return out;
}

double penalized_objective(const PenalizedProblem& problem, const Vector& theta,
                           std::span<const Vector> biases) {
  double total = 0.0;
  for (std::size_t k = 0; k < problem.num_sources(); ++k) {
    const Vector resid = problem.points[k] - theta - biases[k];
    total += 0.5 * problem.weight(k) * resid.dot(problem.metrics[k] * resid);
    const double bn = biases[k].norm();
    if (bn > 0.0) total += problem.penalty_level(k) * bn;
  }
  return total;
}

IndexSet zero_blocks(std::span<const Vector> biases) {
  IndexSet out;
  for (std::size_t k = 0; k < biases.size(); ++k) {
    if (biases[k].isZero(0.0)) out.push_back(k);
  }
  return out;
}

double KktReport::max_residual() const {
  double m = stationarity_residual_theta;
  for (double r : per_source_residuals) m = std::max(m, r);
  return m;
}

KktReport kkt_residual(const PenalizedProblem& problem, const Vector& theta,
                       std::span<const Vector> biases) {
  if (biases.size() != problem.num_sources()) {
    fail(ErrorCode::InvalidProblem, "one bias block per source is required");
  }
  KktReport report;
  Vector stationarity = Vector::Zero(theta.size());
  report.per_source_residuals.assign(problem.num_sources(), 0.0);
  for (std::size_t k = 0; k < problem.num_sources(); ++k) {
    const Matrix piv = problem.weight(k) * problem.metrics[k];
    const Vector force = piv * (problem.points[k] - theta - biases[k]);
    stationarity += force;
    const double bn = biases[k].norm();
    const double level = problem.penalty_level(k);
    if (bn > 0.0) {
      // A nonzero forced block is infeasible; report it as an infinite residual.
      report.per_source_residuals[k] = std::isinf(level)
                                           ? std::numeric_limits<double>::infinity()
                                           : (force - level * biases[k] / bn).norm();
    } else if (!std::isinf(level)) {
      const double margin = level - force.norm();
      report.per_source_residuals[k] = std::max(0.0, -margin);
      report.worst_zero_margin = std::min(report.worst_zero_margin, margin);
    }
  }
  report.stationarity_residual_theta = stationarity.norm();
  return report;
}

KktReport kkt_residual(const FusionProblem& problem, const FusionEstimate& estimate,
                       const PenaltyConfig& penalty, const Vector& initial) {
  const auto pp = PenalizedProblem::build(problem, initial, penalty);
  if (!estimate.biases) fail(ErrorCode::InvalidProblem, "estimate carries no bias blocks");
  return kkt_residual(pp, estimate.theta, *estimate.biases);
}

namespace {

class BlockSolver {
 public:
  BlockSolver(const PenalizedProblem& problem) : p_(problem) {
    const auto d = static_cast<Eigen::Index>(problem.dim());
    Matrix total = Matrix::Zero(d, d);
    prox_.reserve(problem.num_sources());
    levels_.reserve(problem.num_sources());
    for (std::size_t k = 0; k < problem.num_sources(); ++k) {
      prox_.emplace_back(problem.weight(k), problem.metrics[k]);
      levels_.push_back(problem.penalty_level(k));
      total += prox_.back().scaled_metric();
    }
    normal_.compute(total);
    if (normal_.info() != Eigen::Success) {
      fail(ErrorCode::SingularSystem, "aggregate weighting matrix is singular");
    }
  }

  void update_biases(const Vector& theta, std::vector<Vector>& biases) const {
    for (std::size_t k = 0; k < p_.num_sources(); ++k) {
      biases[k] = prox_[k](p_.points[k] - theta, levels_[k]);
    }
  }

  Vector update_theta(std::span<const Vector> biases) const {
    Vector rhs = Vector::Zero(static_cast<Eigen::Index>(p_.dim()));
    for (std::size_t k = 0; k < p_.num_sources(); ++k) {
      rhs += prox_[k].scaled_metric() * (p_.points[k] - biases[k]);
    }
    return normal_.solve(rhs);
  }

  // Objective with every b_k at its optimum for the given theta.
  double profile(const Vector& theta, std::vector<Vector>& biases) const {
    update_biases(theta, biases);
    return penalized_objective(p_, theta, biases);
  }

  // One damped Newton step on the profiled objective. Returns true when the
  // step was accepted (theta and biases updated, objective lowered).
  bool newton_step(Vector& theta, std::vector<Vector>& biases, double& objective) const {
    const auto d = static_cast<Eigen::Index>(p_.dim());
    Vector grad = Vector::Zero(d);
    Matrix hess = Matrix::Zero(d, d);
    for (std::size_t k = 0; k < p_.num_sources(); ++k) {
      grad -= prox_[k].scaled_metric() * (p_.points[k] - theta - biases[k]);
      hess += prox_[k].profile_hessian(biases[k], levels_[k]);
    }
    if (grad.norm() == 0.0) return false;
    hess += 1e-14 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff()) * Matrix::Identity(d, d);
    Eigen::LDLT<Matrix> ldlt(hess);
    if (ldlt.info() != Eigen::Success) return false;
    const Vector dir = -ldlt.solve(grad);
    const double slope = grad.dot(dir);
    if (!(slope < 0.0) || !dir.allFinite()) return false;

    std::vector<Vector> trial_biases = biases;
    double step = 1.0;
    for (int i = 0; i < 40; ++i, step *= 0.5) {
      const Vector trial = theta + step * dir;
      const double f = profile(trial, trial_biases);
      if (f <= objective + 1e-4 * step * slope && f < objective) {
        theta = trial;
        biases = std::move(trial_biases);
        objective = f;
        return true;
      }
    }
    return false;
  }

 private:
  const PenalizedProblem& p_;
  std::vector<GroupProx> prox_;
  std::vector<double> levels_;
  Eigen::LLT<Matrix> normal_;
};

}  // namespace

PenalizedFit solve_penalized_ivw(const PenalizedProblem& problem, const Vector& start,
                                 const PivwSolverConfig& config) {
  problem.validate();
  if (static_cast<std::size_t>(start.size()) != problem.dim()) {
    fail(ErrorCode::InvalidProblem, "starting point has the wrong dimension");
  }
  if (!(config.tol > 0.0) || config.max_sweeps < 1) {
    fail(ErrorCode::InvalidProblem, "solver tolerance and sweep cap must be positive");
  }
  const BlockSolver solver(problem);

  PenalizedFit fit;
  fit.lambda = problem.lambda;
  fit.adaptive_weights = problem.adaptive_weights;

  Vector theta = start;
  std::vector<Vector> biases(problem.num_sources(), Vector::Zero(start.size()));
  double objective = solver.profile(theta, biases);
  if (config.record_objective) fit.objective_trace.push_back(objective);

  bool converged = false;
  int sweep = 0;
  KktReport report;
  while (sweep < config.max_sweeps) {
    ++sweep;
    const Vector theta_prev = theta;
    const std::vector<Vector> biases_prev = biases;

    theta = solver.update_theta(biases);
    solver.update_biases(theta, biases);
    objective = penalized_objective(problem, theta, biases);
    if (config.newton_acceleration) solver.newton_step(theta, biases, objective);
    if (config.record_objective) fit.objective_trace.push_back(objective);

    double change = (theta - theta_prev).norm();
    for (std::size_t k = 0; k < biases.size(); ++k) {
      change = std::max(change, (biases[k] - biases_prev[k]).norm());
    }
    if (change <= config.tol * (1.0 + theta.norm())) {
      report = kkt_residual(problem, theta, biases);
      if (report.passes(config.tol)) {
        converged = true;
        break;
      }
    }
  }
  if (!converged) report = kkt_residual(problem, theta, biases);

  fit.kkt = report;
  fit.estimate.theta = theta;
  fit.estimate.selected = zero_blocks(biases);
  fit.estimate.biases = std::move(biases);
  fit.estimate.diagnostics.status = converged ? SolveStatus::Converged : SolveStatus::NotConverged;
  fit.estimate.diagnostics.iterations = sweep;
  fit.estimate.diagnostics.residual = report.max_residual();
  fit.estimate.diagnostics.objective = objective;
  return fit;
}

PenalizedFit solve_penalized_ivw(const FusionProblem& problem, const Vector& initial,
                                 const PenaltyConfig& penalty, const PivwSolverConfig& config) {
  const auto pp = PenalizedProblem::build(problem, initial, penalty);
  return solve_penalized_ivw(pp, initial, config);
}

}  // namespace rfuse
