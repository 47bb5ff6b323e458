#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "rfuse/fuse.hpp"

namespace rfuse {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string vec(const Vector& v) {
  std::string out = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + num(v[i]);
  return out + ")";
}

nlohmann::json to_json(const Vector& v) {
  auto arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

// JSON has no infinity; forced-zero weights are written as null.
nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

FuseReport run_fuse(const FusionProblem& problem, const FuseOptions& options) {
  FuseReport report;
  const auto points = problem.points();
  report.initial = solve_weighted_geometric_median(points, problem.weights(), options.geomedian);
  report.fit = solve_penalized_ivw(problem, report.initial.median, options.penalty, options.solver);
  const auto& selected = *report.fit.estimate.selected;
  if (selected.empty()) {
    report.inference_note = "no source selected as unbiased";
    return report;
  }
  for (auto k : selected) {
    if (!problem.source(k).cov) {
      report.inference_note = "selected source '" + problem.source(k).id + "' has no covariance";
      return report;
    }
  }
  report.inference = make_inference_report(problem, report.fit.estimate.theta, selected, options.level);
  return report;
}

std::string format_fuse_text(const FusionProblem& problem, const FuseReport& report) {
  std::ostringstream os;
  const auto& est = report.fit.estimate;
  os << "weighting: " << to_string(problem.weighting().kind) << "\n";
  os << "sources: " << problem.num_sources() << "  dim: " << problem.dim()
     << "  total n: " << problem.total_n() << "\n";
  os << "status: " << (report.converged() ? "converged" : "not converged") << "\n";
  os << "geometric median: " << vec(report.initial.median) << "  ["
     << to_string(report.initial.diagnostics.status) << ", " << report.initial.diagnostics.iterations
     << " iterations]\n";
  if (report.initial.non_unique) os << "  note: the median is not unique; one minimizer is shown\n";
  os << "fused estimate: " << vec(est.theta) << "  [" << to_string(est.diagnostics.status) << ", "
     << est.diagnostics.iterations << " sweeps, kkt " << num(report.fit.kkt.max_residual()) << "]\n";
  os << "lambda: " << num(report.fit.lambda) << "\n";
  os << "selected as unbiased:";
  for (auto k : *est.selected) os << " " << problem.source(k).id;
  os << "\n";
  os << "bias estimates:\n";
  for (std::size_t k = 0; k < problem.num_sources(); ++k) {
    os << "  " << problem.source(k).id << "  " << vec((*est.biases)[k]) << "  weight "
       << num(report.fit.adaptive_weights[k]) << "\n";
  }
  if (report.inference) {
    const auto& inf = *report.inference;
    os << "intervals (" << num(100.0 * inf.level) << "%):\n";
    for (std::size_t j = 0; j < inf.intervals.size(); ++j) {
      os << "  theta_" << j + 1 << "  " << num(est.theta[static_cast<Eigen::Index>(j)]) << "  ["
         << num(inf.intervals[j].first) << ", " << num(inf.intervals[j].second) << "]  se "
         << num(std::sqrt(inf.cov_hat(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))))
         << "\n";
    }
  } else {
    os << "intervals: unavailable (" << report.inference_note << ")\n";
  }
  return os.str();
}

std::string format_fuse_json(const FusionProblem& problem, const FuseReport& report) {
  using nlohmann::json;
  const auto& est = report.fit.estimate;
  json out;
  out["weighting"] = to_string(problem.weighting().kind);
  out["status"] = report.converged() ? "converged" : "not_converged";
  out["theta_initial"] = to_json(report.initial.median);
  out["initial_iterations"] = report.initial.diagnostics.iterations;
  out["initial_non_unique"] = report.initial.non_unique;
  out["theta_hat"] = to_json(est.theta);
  out["sweeps"] = est.diagnostics.iterations;
  out["kkt_residual"] = report.fit.kkt.max_residual();
  out["lambda"] = report.fit.lambda;
  auto selected = json::array();
  for (auto k : *est.selected) selected.push_back(problem.source(k).id);
  out["selected"] = selected;
  auto sources = json::array();
  for (std::size_t k = 0; k < problem.num_sources(); ++k) {
    sources.push_back({{"id", problem.source(k).id},
                       {"bias", to_json((*est.biases)[k])},
                       {"adaptive_weight", finite_or_null(report.fit.adaptive_weights[k])}});
  }
  out["sources"] = sources;
  if (report.inference) {
    const auto& inf = *report.inference;
    out["level"] = inf.level;
    auto ints = json::array();
    for (const auto& [lo, hi] : inf.intervals) ints.push_back({lo, hi});
    out["intervals"] = ints;
    auto cov = json::array();
    for (Eigen::Index i = 0; i < inf.cov_hat.rows(); ++i) cov.push_back(to_json(inf.cov_hat.row(i).transpose()));
    out["cov_hat"] = cov;
  } else {
    out["intervals"] = nullptr;
    out["inference_note"] = report.inference_note;
  }
  return out.dump(2) + "\n";
}

}  // namespace rfuse
