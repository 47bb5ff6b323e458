#include "rfuse/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace rfuse {

const char* to_string(WeightingKind kind) noexcept {
  switch (kind) {
    case WeightingKind::Identity: return "identity";
    case WeightingKind::InverseCovariance: return "invcov";
    case WeightingKind::Explicit: return "explicit";
  }
  return "unknown";
}

const char* to_string(SolveStatus status) noexcept {
  return status == SolveStatus::Converged ? "Converged" : "NotConverged";
}

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

bool is_spd(const Matrix& m) {
  if (m.rows() == 0 || !m.allFinite() || !is_symmetric(m)) return false;
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

void validate_source(const SourceSummary& source) {
  if (source.theta.size() == 0) {
    fail(ErrorCode::InvalidProblem, "source '" + source.id + "' has an empty estimate");
  }
  if (!source.theta.allFinite()) {
    fail(ErrorCode::InvalidProblem, "source '" + source.id + "' has a non-finite estimate");
  }
  if (source.n < 1) {
    fail(ErrorCode::InvalidProblem, "source '" + source.id + "' has sample size < 1");
  }
  if (source.cov) {
    const Matrix& c = *source.cov;
    if (c.rows() != source.theta.size() || c.cols() != source.theta.size()) {
      fail(ErrorCode::DimensionMismatch,
           "source '" + source.id + "' covariance does not match estimate dimension");
    }
    if (!is_spd(c)) {
      fail(ErrorCode::NonSpdCovariance,
           "source '" + source.id + "' covariance is not symmetric positive definite");
    }
  }
}

Vector compute_weights(std::span<const SourceSummary> sources) {
  if (sources.empty()) fail(ErrorCode::InvalidProblem, "no sources");
  Vector w(static_cast<Eigen::Index>(sources.size()));
  double total = 0.0;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    if (sources[k].n < 1) {
      fail(ErrorCode::InvalidProblem, "source '" + sources[k].id + "' has sample size < 1");
    }
    total += static_cast<double>(sources[k].n);
  }
  for (std::size_t k = 0; k < sources.size(); ++k) {
    w[static_cast<Eigen::Index>(k)] = static_cast<double>(sources[k].n) / total;
  }
  return w;
}

FusionProblem::FusionProblem(std::vector<SourceSummary> sources, WeightingScheme weighting)
    : sources_(std::move(sources)), weighting_(std::move(weighting)) {
  weights_ = compute_weights(sources_);
  validate();
}

FusionProblem::FusionProblem(std::vector<SourceSummary> sources, Vector weights,
                             WeightingScheme weighting)
    : sources_(std::move(sources)), weights_(std::move(weights)), weighting_(std::move(weighting)) {
  validate();
}

void FusionProblem::validate() {
  if (sources_.empty()) fail(ErrorCode::InvalidProblem, "a fusion problem needs at least one source");
  total_n_ = 0;
  dim_ = static_cast<std::size_t>(sources_.front().theta.size());
  for (const auto& s : sources_) {
    validate_source(s);
    if (static_cast<std::size_t>(s.theta.size()) != dim_) {
      std::ostringstream os;
      os << "source '" << s.id << "' has dimension " << s.theta.size() << ", expected " << dim_;
      fail(ErrorCode::DimensionMismatch, os.str());
    }
    total_n_ += s.n;
  }
  if (static_cast<std::size_t>(weights_.size()) != sources_.size()) {
    fail(ErrorCode::InvalidProblem, "weight vector length differs from the number of sources");
  }
  if (!(weights_.array() > 0.0).all() || !weights_.allFinite()) {
    fail(ErrorCode::InvalidProblem, "weights must be positive and finite");
  }
  if (std::abs(weights_.sum() - 1.0) > 1e-12) {
    fail(ErrorCode::InvalidProblem, "weights must sum to one");
  }
  switch (weighting_.kind) {
    case WeightingKind::Identity: break;
    case WeightingKind::InverseCovariance:
      if (!has_all_covariances()) {
        fail(ErrorCode::MissingCovariance,
             "inverse-covariance weighting requires every source to carry a covariance");
      }
      break;
    case WeightingKind::Explicit:
      if (weighting_.matrices.size() != sources_.size()) {
        fail(ErrorCode::InvalidWeightingMatrix, "need one explicit weighting matrix per source");
      }
      for (std::size_t k = 0; k < weighting_.matrices.size(); ++k) {
        const Matrix& v = weighting_.matrices[k];
        if (static_cast<std::size_t>(v.rows()) != dim_ || !is_spd(v)) {
          fail(ErrorCode::InvalidWeightingMatrix,
               "explicit weighting matrix " + std::to_string(k) + " is not a d x d SPD matrix");
        }
      }
      break;
  }
}

bool FusionProblem::has_all_covariances() const {
  return std::all_of(sources_.begin(), sources_.end(),
                     [](const SourceSummary& s) { return s.cov.has_value(); });
}

std::vector<Vector> FusionProblem::points() const {
  std::vector<Vector> out;
  out.reserve(sources_.size());
  for (const auto& s : sources_) out.push_back(s.theta);
  return out;
}

FusionProblem FusionProblem::with_weighting(WeightingScheme weighting) const {
  return FusionProblem(sources_, weights_, std::move(weighting));
}

std::vector<Matrix> resolve_weighting_matrices(const FusionProblem& problem) {
  const auto d = static_cast<Eigen::Index>(problem.dim());
  std::vector<Matrix> out;
  out.reserve(problem.num_sources());
  switch (problem.weighting().kind) {
    case WeightingKind::Identity:
      for (std::size_t k = 0; k < problem.num_sources(); ++k) out.push_back(Matrix::Identity(d, d));
      break;
    case WeightingKind::InverseCovariance:
      for (const auto& s : problem.sources()) {
        if (!s.cov) {
          fail(ErrorCode::MissingCovariance, "source '" + s.id + "' carries no covariance");
        }
        Eigen::LLT<Matrix> llt(static_cast<double>(s.n) * *s.cov);
        if (llt.info() != Eigen::Success) {
          fail(ErrorCode::InvalidWeightingMatrix, "covariance of '" + s.id + "' is not SPD");
        }
        out.push_back(symmetrize(llt.solve(Matrix::Identity(d, d))));
      }
      break;
    case WeightingKind::Explicit:
      for (const auto& v : problem.weighting().matrices) {
        if (!is_spd(v)) fail(ErrorCode::InvalidWeightingMatrix, "explicit weighting matrix is not SPD");
        out.push_back(v);
      }
      break;
  }
  return out;
}

GroundTruth GroundTruth::from_biases(Vector theta0, std::vector<Vector> biases) {
  GroundTruth t{std::move(theta0), std::move(biases), {}};
  for (std::size_t k = 0; k < t.biases.size(); ++k) {
    if (t.biases[k].isZero(0.0)) t.unbiased_set.push_back(k);
  }
  t.validate();
  return t;
}

void GroundTruth::validate() const {
  std::vector<bool> unbiased(biases.size(), false);
  for (auto k : unbiased_set) {
    if (k >= biases.size()) fail(ErrorCode::InvalidGroundTruth, "unbiased index out of range");
    unbiased[k] = true;
  }
  for (std::size_t k = 0; k < biases.size(); ++k) {
    if (biases[k].size() != theta0.size()) {
      fail(ErrorCode::InvalidGroundTruth, "bias dimension differs from theta0");
    }
    const bool zero = biases[k].isZero(0.0);
    if (unbiased[k] && !zero) {
      fail(ErrorCode::InvalidGroundTruth, "source " + std::to_string(k) + " is in K0 but has a bias");
    }
    if (!unbiased[k] && zero) {
      fail(ErrorCode::InvalidGroundTruth,
           "source " + std::to_string(k) + " is outside K0 but has a zero bias");
    }
  }
}

}  // namespace rfuse
