#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "parallel.hpp"
#include "rfuse/inference.hpp"
#include "rfuse/simharness.hpp"

namespace rfuse {
namespace {

WeightingScheme scheme_for(WeightingKind kind) {
  switch (kind) {
    case WeightingKind::Identity: return WeightingScheme::identity();
    case WeightingKind::InverseCovariance: return WeightingScheme::inverse_covariance();
    case WeightingKind::Explicit: break;
  }
  fail(ErrorCode::InvalidDesign, "simulations support identity or invcov weighting only");
}

std::optional<int> covered_coords(const FusionProblem& problem, const Vector& est,
                                  std::span<const std::size_t> set, const Vector& theta0,
                                  double level) {
  try {
    const Matrix cov = estimate_covariance(problem, set);
    int hits = 0;
    for (std::size_t j = 0; j < problem.dim(); ++j) {
      const auto [lo, hi] = wald_interval(est, cov, j, level);
      const double t = theta0[static_cast<Eigen::Index>(j)];
      if (lo <= t && t <= hi) ++hits;
    }
    return hits;
  } catch (const Error&) {
    return std::nullopt;
  }
}

struct Intermediate {
  ReplicateRecord record;
  std::optional<Vector> oracle;
};

Intermediate run_one(const SimDesign& design, const SimOptions& options,
                     std::span<const double> beta_bar, std::size_t rep) {
  Intermediate out;
  auto& rec = out.record;
  const std::size_t E = design.estimators.size();
  rec.estimates.assign(E, std::nullopt);
  rec.covered.assign(E, std::nullopt);

  auto rng = substream(design.seed, rep, 0);
  SimSample sample;
  try {
    switch (design.family) {
      case DesignFamily::Linear: sample = dgp_linear(design, rng); break;
      case DesignFamily::Logistic: sample = dgp_logistic(design, rng); break;
      case DesignFamily::MrRatio: sample = dgp_mr(design, beta_bar, rng); break;
      case DesignFamily::MedianCounterexample:
        fail(ErrorCode::InvalidDesign, "counterexample has its own driver");
    }
  } catch (const Error& e) {
    rec.error = e.what();
    return out;
  }
  rec.ok = true;
  rec.retries = sample.retries;
  const auto& truth = sample.truth;
  rec.theta0 = truth.theta0;

  const FusionProblem problem(sample.sources, scheme_for(design.weighting));
  const std::size_t K = problem.num_sources();
  IndexSet all(K);
  std::iota(all.begin(), all.end(), std::size_t{0});

  try {
    out.oracle = oracle_ivw(problem, truth.unbiased_set).theta;
  } catch (const Error&) {
  }

  std::optional<Vector> initial;
  const auto points = problem.points();
  const auto gm = solve_weighted_geometric_median(points, problem.weights(), options.geomedian);
  if (gm.diagnostics.status == SolveStatus::Converged) initial = gm.median;

  if (truth.unbiased_set.size() < K) {
    const double delta = delta_margin(problem.weights(), truth);
    rec.delta = delta;
    if (delta > 0.0) {
      std::vector<double> errors(K);
      for (std::size_t k = 0; k < K; ++k) errors[k] = (points[k] - truth.source_limit(k)).norm();
      rec.bound_holds = consistency_bound_check(gm.median, truth, errors, problem.weights());
    }
  }

  std::optional<PenalizedFit> fit;
  if (initial) {
    try {
      auto f = solve_penalized_ivw(problem, *initial, options.penalty, options.solver);
      if (f.estimate.converged()) fit = std::move(f);
    } catch (const Error&) {
    }
  }
  if (fit) rec.selection_exact = *fit->estimate.selected == truth.unbiased_set;

  for (std::size_t e = 0; e < E; ++e) {
    try {
      switch (design.estimators[e]) {
        case EstimatorKind::Naive:
          rec.estimates[e] = oracle_ivw(problem, all).theta;
          rec.covered[e] = covered_coords(problem, *rec.estimates[e], all, truth.theta0, options.level);
          break;
        case EstimatorKind::Oracle:
          if (out.oracle) {
            rec.estimates[e] = out.oracle;
            rec.covered[e] = covered_coords(problem, *out.oracle, truth.unbiased_set, truth.theta0,
                                            options.level);
          }
          break;
        case EstimatorKind::Initial:
          rec.estimates[e] = initial;
          break;
        case EstimatorKind::Penalized:
          if (fit) {
            rec.estimates[e] = fit->estimate.theta;
            rec.covered[e] = covered_coords(problem, fit->estimate.theta, *fit->estimate.selected,
                                            truth.theta0, options.level);
          }
          break;
        case EstimatorKind::Refit:
          if (fit && !fit->estimate.selected->empty()) {
            rec.estimates[e] = oracle_ivw(problem, *fit->estimate.selected).theta;
            rec.covered[e] = covered_coords(problem, *rec.estimates[e], *fit->estimate.selected,
                                            truth.theta0, options.level);
          }
          break;
      }
    } catch (const Error&) {
      rec.estimates[e].reset();
      rec.covered[e].reset();
    }
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

const EstimatorMetrics& SimResult::at(EstimatorKind kind) const {
  for (const auto& m : metrics) {
    if (m.estimator == kind) return m;
  }
  fail(ErrorCode::InvalidDesign, std::string("estimator not in battery: ") + to_string(kind));
}

SimResult run_replications(const SimDesign& design, const SimOptions& options) {
  design.validate();
  if (design.family == DesignFamily::MedianCounterexample) {
    fail(ErrorCode::InvalidDesign, "use counterexample_median for this design");
  }
  if (design.estimators.empty()) fail(ErrorCode::InvalidDesign, "estimator battery is empty");
  options.penalty.validate();
  scheme_for(design.weighting);
  if (!(options.level > 0.0 && options.level < 1.0)) fail(ErrorCode::InvalidDesign, "level must lie in (0, 1)");

  std::vector<double> beta_bar;
  if (design.family == DesignFamily::MrRatio) beta_bar = mr_beta_bar(design);

  const auto R = static_cast<std::size_t>(design.replicates);
  std::vector<Intermediate> parts(R);
  detail::parallel_for(R, options.threads, [&](std::size_t r) {
    parts[r] = run_one(design, options, beta_bar, r);
  });

  SimResult result;
  result.design = design;
  result.lambda_c = options.penalty.rule == PenaltyConfig::LambdaRule::ScaledByN
                        ? options.penalty.lambda_c
                        : std::nan("");

  const std::size_t E = design.estimators.size();
  for (std::size_t e = 0; e < E; ++e) {
    EstimatorMetrics m;
    m.estimator = design.estimators[e];
    std::vector<const Vector*> ests;
    Vector theta0;
    double equiv_sum = 0.0;
    int equiv_count = 0;
    int cover_hits = 0;
    int cover_total = 0;
    for (const auto& part : parts) {
      const auto& rec = part.record;
      if (!rec.ok || !rec.estimates[e]) {
        ++m.failures;
        continue;
      }
      ests.push_back(&*rec.estimates[e]);
      theta0 = rec.theta0;
      if (part.oracle) {
        equiv_sum += (*rec.estimates[e] - *part.oracle).norm();
        ++equiv_count;
      }
      if (rec.covered[e]) {
        cover_hits += *rec.covered[e];
        cover_total += static_cast<int>(rec.theta0.size());
      }
    }
    if (!ests.empty()) {
      const auto d = ests.front()->size();
      Vector mean = Vector::Zero(d);
      for (const auto* v : ests) mean += *v;
      mean /= static_cast<double>(ests.size());
      m.nb = (mean - theta0).norm();
      if (ests.size() > 1) {
        Vector ss = Vector::Zero(d);
        for (const auto* v : ests) ss += (*v - mean).cwiseAbs2();
        m.sse = (ss / static_cast<double>(ests.size() - 1)).cwiseSqrt().sum();
      }
    } else {
      m.nb = std::nan("");
      m.sse = std::nan("");
    }
    m.equiv_dist = equiv_count > 0 ? equiv_sum / equiv_count : std::nan("");
    if (cover_total > 0) m.coverage = static_cast<double>(cover_hits) / cover_total;
    if (m.estimator == EstimatorKind::Penalized) {
      int exact = 0;
      for (const auto& part : parts) exact += part.record.selection_exact.value_or(false) ? 1 : 0;
      m.selection_rate = static_cast<double>(exact) / static_cast<double>(R);
    }
    result.metrics.push_back(m);
  }

  for (auto& part : parts) {
    const auto& rec = part.record;
    if (!rec.ok) ++result.generation_failures;
    result.retries += rec.retries;
    if (rec.bound_holds) {
      ++result.bound_checked;
      if (!*rec.bound_holds) ++result.bound_violations;
    }
    result.records.push_back(std::move(part.record));
  }
  return result;
}

std::string metrics_csv_header() {
  return "design,family,d,K,n_star,bias_scale,replicates,seed,weighting,lambda_c,estimator,"
         "NB,SSE,selection_rate,equiv_dist,coverage,failures\n";
}

std::string metrics_csv_rows(const SimResult& r) {
  const auto& d = r.design;
  std::ostringstream os;
  for (const auto& m : r.metrics) {
    os << d.name << ',' << to_string(d.family) << ',' << d.d << ',' << d.K << ','
       << (d.family == DesignFamily::MrRatio ? std::string("NA") : std::to_string(d.n_star)) << ','
       << fmt(d.bias_scale) << ',' << d.replicates << ',' << d.seed << ','
       << to_string(d.weighting) << ','
       << (std::isnan(r.lambda_c) ? std::string("NA") : fmt(r.lambda_c)) << ','
       << to_string(m.estimator) << ',' << fmt(m.nb) << ',' << fmt(m.sse) << ','
       << fmt(m.selection_rate) << ',' << fmt(m.equiv_dist) << ',' << fmt(m.coverage) << ','
       << m.failures << '\n';
  }
  return os.str();
}

std::string metrics_table(const SimResult& r) {
  const auto& d = r.design;
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%s (%s)  d=%d  K=%d  n*=%s  reps=%d  seed=%llu\n",
                d.name.c_str(), to_string(d.family), d.d, d.K,
                d.family == DesignFamily::MrRatio ? "NA" : std::to_string(d.n_star).c_str(),
                d.replicates, static_cast<unsigned long long>(d.seed));
  os << line;
  os << "NB and SSE multiplied by 10\n";
  std::snprintf(line, sizeof line, "%-10s %9s %9s %9s %9s %9s %6s\n", "estimator", "NB", "SSE",
                "select", "equiv", "cover", "fail");
  os << line;
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v).substr(0, 9) : std::string("-"); };
  for (const auto& m : r.metrics) {
    std::snprintf(line, sizeof line, "%-10s %9.2f %9.2f %9s %9.4f %9s %6d\n", to_string(m.estimator),
                  10.0 * m.nb, 10.0 * m.sse, opt(m.selection_rate).c_str(), m.equiv_dist,
                  opt(m.coverage).c_str(), m.failures);
    os << line;
  }
  if (r.bound_checked > 0) {
    std::snprintf(line, sizeof line, "median bound held in %d of %d replicates\n",
                  r.bound_checked - r.bound_violations, r.bound_checked);
    os << line;
  }
  return os.str();
}

}  // namespace rfuse
