#include "rfuse/group_prox.hpp"

#include <cmath>
#include <limits>

namespace rfuse {

GroupProx::GroupProx(double pi, const Matrix& V) : pi_v_(pi * V) {
  if (!(pi > 0.0) || !is_spd(V)) {
    fail(ErrorCode::InvalidProblem, "group prox needs pi > 0 and an SPD metric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(pi_v_);
  eigvecs_ = eig.eigenvectors();
  eigvals_ = eig.eigenvalues();
}

Vector GroupProx::operator()(const Vector& r, double kappa) const {
  if (kappa < 0.0 || std::isnan(kappa)) fail(ErrorCode::InvalidProblem, "kappa must be nonnegative");
  if (std::isinf(kappa)) return Vector::Zero(r.size());
  if (kappa == 0.0) return r;

  const double pull = (pi_v_ * r).norm();
  if (pull <= kappa) return Vector::Zero(r.size());
  const Vector s = eigvecs_.transpose() * r;

  // With mu = kappa / ||b||, b = Q diag(a / (a + mu)) Q^T r and the scalar
  // equation h(mu) = ||diag(a mu / (a + mu)) s|| - kappa = 0 is increasing in mu.
  // Bracket from the extreme eigenvalues: h(lo) <= 0 <= h(hi).
  const double excess = pull - kappa;
  double lo = kappa * eigvals_.minCoeff() / excess * (1.0 - 1e-12);
  double hi = kappa * eigvals_.maxCoeff() / excess * (1.0 + 1e-12);
  auto h_and_slope = [&](double mu, double& slope) {
    const Vector c = (eigvals_.array() * mu / (eigvals_.array() + mu) * s.array()).matrix();
    const Vector dc = (eigvals_.array().square() / (eigvals_.array() + mu).square() * s.array()).matrix();
    const double nc = c.norm();
    slope = nc > 0.0 ? c.dot(dc) / nc : s.norm();
    return nc - kappa;
  };

  double mu = hi;
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    double slope = 0.0;
    const double h = h_and_slope(mu, slope);
    if (std::abs(h) <= 4.0 * std::numeric_limits<double>::epsilon() * kappa) {
      converged = true;
      break;
    }
    if (h > 0.0) hi = mu; else lo = mu;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
      converged = true;
      break;
    }
    double next = slope > 0.0 ? mu - h / slope : std::sqrt(lo * hi);
    if (!(next > lo && next < hi)) next = std::sqrt(lo * hi);
    mu = next;
  }
  if (!converged) fail(ErrorCode::NotConverged, "group prox root-finder did not converge");

  const Vector shrink = (eigvals_.array() / (eigvals_.array() + mu)).matrix();
  return eigvecs_ * shrink.cwiseProduct(s);
}

Matrix GroupProx::profile_hessian(const Vector& b, double kappa) const {
  const double t = b.norm();
  if (t == 0.0 || std::isinf(kappa)) return pi_v_;
  const auto d = static_cast<Eigen::Index>(dim());
  const Vector u = b / t;
  const Matrix proj = Matrix::Identity(d, d) - u * u.transpose();
  const Matrix inner = pi_v_ + (kappa / t) * proj;
  const Matrix h = pi_v_ - pi_v_ * inner.ldlt().solve(pi_v_);
  return symmetrize(h);
}

Vector group_prox(const Vector& r, double pi, const Matrix& V, double kappa) {
  if (V.rows() != r.size()) fail(ErrorCode::InvalidProblem, "group prox dimension mismatch");
  return GroupProx(pi, V)(r, kappa);
}

}  // namespace rfuse
