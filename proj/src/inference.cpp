#include "rfuse/inference.hpp"

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

namespace rfuse {

Matrix estimate_covariance(const FusionProblem& problem, std::span<const std::size_t> selected) {
  if (selected.empty()) fail(ErrorCode::EmptySelection, "no selected sources to base inference on");
  for (auto k : selected) {
    if (k >= problem.num_sources()) fail(ErrorCode::InvalidProblem, "selected index out of range");
    if (!problem.source(k).cov) {
      fail(ErrorCode::MissingCovariance, "source '" + problem.source(k).id + "' has no covariance");
    }
  }
  const auto metrics = resolve_weighting_matrices(problem);
  const auto d = static_cast<Eigen::Index>(problem.dim());
  Matrix v0 = Matrix::Zero(d, d);
  Matrix meat = Matrix::Zero(d, d);
  for (auto k : selected) {
    const auto& s = problem.source(k);
    const double pi = problem.weights()[static_cast<Eigen::Index>(k)];
    const Matrix S = static_cast<double>(s.n) * (*s.cov);
    v0 += pi * metrics[k];
    meat += pi * metrics[k] * S * metrics[k];
  }
  Eigen::LLT<Matrix> llt(v0);
  if (llt.info() != Eigen::Success) fail(ErrorCode::SingularSystem, "aggregate weighting matrix is singular");
  const Matrix half = llt.solve(meat);
  const Matrix cov = llt.solve(half.transpose()) / static_cast<double>(problem.total_n());
  return symmetrize(cov);
}

std::pair<double, double> wald_interval(const Vector& theta, const Matrix& cov, std::size_t coord,
                                        double level) {
  const auto i = static_cast<Eigen::Index>(coord);
  if (i >= theta.size() || cov.rows() != theta.size() || cov.cols() != theta.size()) {
    fail(ErrorCode::InvalidCovariance, "covariance and estimate dimensions disagree");
  }
  if (!(level > 0.0 && level < 1.0)) fail(ErrorCode::InvalidCovariance, "level must lie in (0, 1)");
  const double var = cov(i, i);
  if (!(var >= 0.0)) fail(ErrorCode::InvalidCovariance, "negative variance on the diagonal");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
  const double half = z * std::sqrt(var);
  return {theta[i] - half, theta[i] + half};
}

WaldResult wald_test(const Vector& theta, const Matrix& cov, const Matrix& contrast,
                     const Vector& null_value) {
  const auto q = contrast.rows();
  const auto d = theta.size();
  if (contrast.cols() != d || q < 1 || q > d || null_value.size() != q) {
    fail(ErrorCode::InvalidContrast, "contrast shape does not match the estimate");
  }
  if (cov.rows() != d || cov.cols() != d) fail(ErrorCode::InvalidCovariance, "covariance has the wrong shape");
  Eigen::FullPivLU<Matrix> lu(contrast);
  lu.setThreshold(1e-12);
  if (lu.rank() < q) fail(ErrorCode::InvalidContrast, "contrast is not full row rank");

  const Vector diff = contrast * theta - null_value;
  const Matrix middle = symmetrize(contrast * cov * contrast.transpose());
  Eigen::LDLT<Matrix> ldlt(middle);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
    fail(ErrorCode::InvalidCovariance, "contrast covariance is not positive definite");
  }
  WaldResult out;
  out.statistic = std::max(0.0, diff.dot(ldlt.solve(diff)));
  boost::math::chi_squared chi(static_cast<double>(q));
  out.p_value = out.statistic == 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(chi, out.statistic));
  return out;
}

InferenceReport make_inference_report(const FusionProblem& problem, const Vector& theta,
                                      std::span<const std::size_t> selected, double level) {
  InferenceReport report;
  report.level = level;
  report.cov_hat = estimate_covariance(problem, selected);
  for (std::size_t j = 0; j < problem.dim(); ++j) {
    report.intervals.push_back(wald_interval(theta, report.cov_hat, j, level));
  }
  return report;
}

}  // namespace rfuse
