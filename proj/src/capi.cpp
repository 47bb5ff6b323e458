#include "rfuse/rfuse.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "rfuse/fuse.hpp"
#include "rfuse/simharness.hpp"
#include "rfuse/summary_io.hpp"

struct rfuse_problem {
  rfuse::FusionProblem problem;
};

struct rfuse_fit {
  rfuse::FusionProblem problem;
  rfuse::FuseReport report;
};

namespace {

thread_local std::string last_error;

rfuse_status map_code(rfuse::ErrorCode code) {
  using rfuse::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidProblem: return RFUSE_INVALID_PROBLEM;
    case ErrorCode::InvalidWeightingMatrix: return RFUSE_INVALID_WEIGHTING;
    case ErrorCode::MissingCovariance: return RFUSE_MISSING_COVARIANCE;
    case ErrorCode::NotConverged: return RFUSE_NOT_CONVERGED;
    case ErrorCode::InvalidGroundTruth: return RFUSE_INVALID_GROUND_TRUTH;
    case ErrorCode::IdentificationFailure: return RFUSE_IDENTIFICATION_FAILURE;
    case ErrorCode::SingularSystem: return RFUSE_SINGULAR_SYSTEM;
    case ErrorCode::InvalidCovariance: return RFUSE_INVALID_COVARIANCE;
    case ErrorCode::InvalidContrast: return RFUSE_INVALID_CONTRAST;
    case ErrorCode::EmptySelection: return RFUSE_EMPTY_SELECTION;
    case ErrorCode::InvalidDesign: return RFUSE_INVALID_DESIGN;
    case ErrorCode::ParseError: return RFUSE_PARSE_ERROR;
    case ErrorCode::DimensionMismatch: return RFUSE_DIMENSION_MISMATCH;
    case ErrorCode::NonSpdCovariance: return RFUSE_NON_SPD_COVARIANCE;
    case ErrorCode::Io: return RFUSE_IO_ERROR;
  }
  return RFUSE_INTERNAL_ERROR;
}

rfuse_status set_error(rfuse_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <class Fn>
rfuse_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const rfuse::Error& e) {
    return set_error(map_code(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(RFUSE_INTERNAL_ERROR, "out of memory");
  } catch (const std::exception& e) {
    return set_error(RFUSE_INTERNAL_ERROR, e.what());
  } catch (...) {
    return set_error(RFUSE_INTERNAL_ERROR, "unknown failure");
  }
}

rfuse::WeightingScheme scheme(rfuse_weighting w) {
  if (w == RFUSE_VK_INVCOV) return rfuse::WeightingScheme::inverse_covariance();
  if (w == RFUSE_VK_IDENTITY) return rfuse::WeightingScheme::identity();
  rfuse::fail(rfuse::ErrorCode::InvalidWeightingMatrix, "unknown weighting choice");
}

rfuse::WeightingKind kind(rfuse_weighting w) {
  return w == RFUSE_VK_INVCOV ? rfuse::WeightingKind::InverseCovariance : rfuse::WeightingKind::Identity;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

rfuse_status copy_vector(const rfuse::Vector& v, double* out, size_t len) {
  if (!out || len < static_cast<size_t>(v.size())) {
    return set_error(RFUSE_INVALID_ARGUMENT, "output buffer too small");
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v[i];
  return RFUSE_OK;
}

std::string simulate_text(const rfuse_sim_options& o) {
  const std::string name = o.design ? o.design : "";
  auto design = rfuse::SimDesign::named(name);
  if (o.replicates > 0) design.replicates = o.replicates;
  design.seed = o.seed;
  if (design.family == rfuse::DesignFamily::MedianCounterexample) {
    const int K = o.K > 0 ? o.K : design.K;
    const int n = o.total_n > 0 ? o.total_n : design.total_n;
    const double tau = o.tau > 0.0 ? o.tau : design.tau;
    const auto res = rfuse::counterexample_median(K, n, tau, design.replicates, o.seed, o.threads);
    if (!o.pretty) return rfuse::counterexample_csv(res);
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "counterexample  K=%d  n=%d  tau=%g  reps=%d\nh* = %.6f  threshold = %.6f\n"
                  "P(median - theta0 >= threshold) = %.4f\n",
                  res.K, res.total_n, res.tau, res.replicates, res.h_star, res.threshold, res.exceedance);
    return buf;
  }
  if (design.family != rfuse::DesignFamily::MrRatio) {
    if (o.d > 0) design.d = o.d;
    if (o.K > 0) design.K = o.K;
    if (o.n_star > 0) design.n_star = o.n_star;
  }
  design.weighting = kind(o.weighting);

  std::vector<double> cs{o.lambda_c};
  if (o.lambda_sweep) cs = {0.5, 1.0, 2.0, 5.0};
  std::string out = o.pretty ? "" : rfuse::metrics_csv_header();
  for (double c : cs) {
    rfuse::SimOptions opts;
    opts.penalty = rfuse::PenaltyConfig::scaled_by_n(c, o.alpha);
    opts.level = o.level;
    opts.threads = o.threads;
    const auto res = rfuse::run_replications(design, opts);
    if (o.pretty) {
      if (!out.empty()) out += "\n";
      out += "lambda_c = " + std::to_string(c) + "\n" + rfuse::metrics_table(res);
    } else {
      out += rfuse::metrics_csv_rows(res);
    }
  }
  return out;
}

}  // namespace

extern "C" {

const char* rfuse_version(void) { return "0.1.0"; }

const char* rfuse_status_string(rfuse_status status) {
  switch (status) {
    case RFUSE_OK: return "ok";
    case RFUSE_NOT_CONVERGED: return "not converged";
    case RFUSE_INVALID_ARGUMENT: return "invalid argument";
    case RFUSE_INVALID_PROBLEM: return "invalid problem";
    case RFUSE_INVALID_WEIGHTING: return "invalid weighting matrix";
    case RFUSE_MISSING_COVARIANCE: return "missing covariance";
    case RFUSE_SINGULAR_SYSTEM: return "singular system";
    case RFUSE_INVALID_COVARIANCE: return "invalid covariance";
    case RFUSE_INVALID_CONTRAST: return "invalid contrast";
    case RFUSE_EMPTY_SELECTION: return "empty selection";
    case RFUSE_INVALID_DESIGN: return "invalid design";
    case RFUSE_PARSE_ERROR: return "parse error";
    case RFUSE_DIMENSION_MISMATCH: return "dimension mismatch";
    case RFUSE_NON_SPD_COVARIANCE: return "covariance not positive definite";
    case RFUSE_IO_ERROR: return "i/o error";
    case RFUSE_IDENTIFICATION_FAILURE: return "identification failure";
    case RFUSE_INVALID_GROUND_TRUTH: return "invalid ground truth";
    case RFUSE_INTERNAL_ERROR: return "internal error";
  }
  return "unknown status";
}

const char* rfuse_last_error(void) { return last_error.c_str(); }

rfuse_status rfuse_problem_load(const char* path, rfuse_format format, rfuse_weighting weighting,
                                rfuse_problem** out) {
  if (!path || !out) return set_error(RFUSE_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    const auto fmt = format == RFUSE_FORMAT_AUTO   ? rfuse::format_from_path(path)
                     : format == RFUSE_FORMAT_JSON ? rfuse::SummaryFormat::Json
                                                   : rfuse::SummaryFormat::Csv;
    *out = new rfuse_problem{rfuse::parse_summary_file(path, fmt, scheme(weighting))};
    return RFUSE_OK;
  });
}

rfuse_status rfuse_problem_create(size_t num_sources, size_t dim, const char* const* ids,
                                  const int64_t* n, const double* theta, const double* cov_tril,
                                  rfuse_weighting weighting, rfuse_problem** out) {
  if (!out || !n || !theta || num_sources == 0 || dim == 0) {
    return set_error(RFUSE_INVALID_ARGUMENT, "null argument or empty problem");
  }
  *out = nullptr;
  return guarded([&] {
    const size_t tri = dim * (dim + 1) / 2;
    std::vector<rfuse::SourceSummary> sources(num_sources);
    for (size_t k = 0; k < num_sources; ++k) {
      auto& s = sources[k];
      s.id = ids && ids[k] ? ids[k] : "s" + std::to_string(k + 1);
      s.n = n[k];
      s.theta = Eigen::Map<const rfuse::Vector>(theta + k * dim, static_cast<Eigen::Index>(dim));
      if (cov_tril) s.cov = rfuse::tril_to_cov({cov_tril + k * tri, tri}, dim);
    }
    *out = new rfuse_problem{rfuse::FusionProblem(std::move(sources), scheme(weighting))};
    return RFUSE_OK;
  });
}

rfuse_status rfuse_problem_write(const rfuse_problem* problem, const char* path, rfuse_format format) {
  if (!problem || !path) return set_error(RFUSE_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const auto fmt = format == RFUSE_FORMAT_AUTO   ? rfuse::format_from_path(path)
                     : format == RFUSE_FORMAT_JSON ? rfuse::SummaryFormat::Json
                                                   : rfuse::SummaryFormat::Csv;
    rfuse::write_summary_file(path, problem->problem.sources(), fmt);
    return RFUSE_OK;
  });
}

size_t rfuse_problem_num_sources(const rfuse_problem* problem) {
  return problem ? problem->problem.num_sources() : 0;
}

size_t rfuse_problem_dim(const rfuse_problem* problem) { return problem ? problem->problem.dim() : 0; }

const char* rfuse_problem_source_id(const rfuse_problem* problem, size_t k) {
  if (!problem || k >= problem->problem.num_sources()) return nullptr;
  return problem->problem.source(k).id.c_str();
}

void rfuse_problem_free(rfuse_problem* problem) { delete problem; }

void rfuse_fuse_options_default(rfuse_fuse_options* options) {
  if (!options) return;
  options->lambda_c = 1.0;
  options->alpha = 2.0;
  options->tol = 1e-8;
  options->max_iter = 5000;
  options->level = 0.95;
}

rfuse_status rfuse_fuse(const rfuse_problem* problem, const rfuse_fuse_options* options,
                        rfuse_fit** out) {
  if (!problem || !out) return set_error(RFUSE_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  rfuse_fuse_options o;
  rfuse_fuse_options_default(&o);
  if (options) o = *options;
  return guarded([&] {
    rfuse::FuseOptions fo;
    fo.penalty = rfuse::PenaltyConfig::scaled_by_n(o.lambda_c, o.alpha);
    fo.solver.tol = o.tol;
    fo.solver.max_sweeps = o.max_iter;
    fo.level = o.level;
    if (!(o.level > 0.0 && o.level < 1.0)) {
      return set_error(RFUSE_INVALID_ARGUMENT, "level must lie in (0, 1)");
    }
    auto* fit = new rfuse_fit{problem->problem, rfuse::run_fuse(problem->problem, fo)};
    *out = fit;
    if (!fit->report.converged()) {
      return set_error(RFUSE_NOT_CONVERGED, "solver stopped at its iteration cap");
    }
    return RFUSE_OK;
  });
}

int rfuse_fit_converged(const rfuse_fit* fit) { return fit && fit->report.converged() ? 1 : 0; }

size_t rfuse_fit_dim(const rfuse_fit* fit) { return fit ? fit->problem.dim() : 0; }

rfuse_status rfuse_fit_theta_hat(const rfuse_fit* fit, double* out, size_t len) {
  if (!fit) return set_error(RFUSE_INVALID_ARGUMENT, "null fit");
  return copy_vector(fit->report.fit.estimate.theta, out, len);
}

rfuse_status rfuse_fit_theta_initial(const rfuse_fit* fit, double* out, size_t len) {
  if (!fit) return set_error(RFUSE_INVALID_ARGUMENT, "null fit");
  return copy_vector(fit->report.initial.median, out, len);
}

rfuse_status rfuse_fit_bias(const rfuse_fit* fit, size_t k, double* out, size_t len) {
  if (!fit || k >= fit->problem.num_sources()) return set_error(RFUSE_INVALID_ARGUMENT, "bad source index");
  return copy_vector((*fit->report.fit.estimate.biases)[k], out, len);
}

size_t rfuse_fit_num_selected(const rfuse_fit* fit) {
  return fit ? fit->report.fit.estimate.selected->size() : 0;
}

size_t rfuse_fit_selected(const rfuse_fit* fit, size_t* out, size_t len) {
  if (!fit || !out) return 0;
  const auto& sel = *fit->report.fit.estimate.selected;
  const size_t m = std::min(len, sel.size());
  for (size_t i = 0; i < m; ++i) out[i] = sel[i];
  return m;
}

int rfuse_fit_has_inference(const rfuse_fit* fit) { return fit && fit->report.inference ? 1 : 0; }

rfuse_status rfuse_fit_interval(const rfuse_fit* fit, size_t coord, double* lower, double* upper) {
  if (!fit || !lower || !upper) return set_error(RFUSE_INVALID_ARGUMENT, "null argument");
  if (!fit->report.inference) return set_error(RFUSE_MISSING_COVARIANCE, fit->report.inference_note);
  const auto& ints = fit->report.inference->intervals;
  if (coord >= ints.size()) return set_error(RFUSE_INVALID_ARGUMENT, "coordinate out of range");
  *lower = ints[coord].first;
  *upper = ints[coord].second;
  return RFUSE_OK;
}

rfuse_status rfuse_fit_cov(const rfuse_fit* fit, double* out, size_t len) {
  if (!fit || !out) return set_error(RFUSE_INVALID_ARGUMENT, "null argument");
  if (!fit->report.inference) return set_error(RFUSE_MISSING_COVARIANCE, fit->report.inference_note);
  const auto& c = fit->report.inference->cov_hat;
  const auto d = static_cast<size_t>(c.rows());
  if (len < d * d) return set_error(RFUSE_INVALID_ARGUMENT, "output buffer too small");
  for (size_t i = 0; i < d; ++i)
    for (size_t j = 0; j < d; ++j) out[i * d + j] = c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return RFUSE_OK;
}

int rfuse_fit_iterations(const rfuse_fit* fit) {
  return fit ? fit->report.fit.estimate.diagnostics.iterations : 0;
}

double rfuse_fit_kkt_residual(const rfuse_fit* fit) { return fit ? fit->report.fit.kkt.max_residual() : 0.0; }

double rfuse_fit_lambda(const rfuse_fit* fit) { return fit ? fit->report.fit.lambda : 0.0; }

rfuse_status rfuse_fit_report(const rfuse_fit* fit, int as_json, char** out) {
  if (!fit || !out) return set_error(RFUSE_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = dup_string(as_json ? rfuse::format_fuse_json(fit->problem, fit->report)
                              : rfuse::format_fuse_text(fit->problem, fit->report));
    return RFUSE_OK;
  });
}

void rfuse_fit_free(rfuse_fit* fit) { delete fit; }

void rfuse_sim_options_default(rfuse_sim_options* o) {
  if (!o) return;
  o->design = "table1";
  o->d = 0;
  o->K = 0;
  o->n_star = 0;
  o->replicates = 0;
  o->seed = 1;
  o->threads = 1;
  o->lambda_c = 1.0;
  o->alpha = 2.0;
  o->weighting = RFUSE_VK_IDENTITY;
  o->total_n = 0;
  o->tau = 0.0;
  o->level = 0.95;
  o->lambda_sweep = 0;
  o->pretty = 0;
}

rfuse_status rfuse_simulate(const rfuse_sim_options* options, char** out) {
  if (!options || !out) return set_error(RFUSE_INVALID_ARGUMENT, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = dup_string(simulate_text(*options));
    return RFUSE_OK;
  });
}

void rfuse_string_free(char* str) { std::free(str); }

}  // extern "C"
