#pragma once

#include "rfuse/core_model.hpp"

namespace rfuse {

/// Proximal map of one bias block:
///   argmin_b (pi/2)(r - b)^T V (r - b) + kappa ||b||.
/// The eigendecomposition of V is computed once so repeated calls inside a
/// block-coordinate solver cost O(d^2) plus a scalar root-find.
class GroupProx {
 public:
  GroupProx(double pi, const Matrix& V);

  /// Zero iff ||pi V r|| <= kappa. kappa = +inf always returns zero.
  Vector operator()(const Vector& r, double kappa) const;

  /// Hessian of the block's profiled loss phi(r) = min_b {...} with respect
  /// to r, evaluated at the block solution `b` (which must be prox(r)).
  Matrix profile_hessian(const Vector& b, double kappa) const;

  const Matrix& scaled_metric() const { return pi_v_; }  // pi * V
  std::size_t dim() const { return static_cast<std::size_t>(pi_v_.rows()); }

 private:
  Matrix pi_v_;
  Matrix eigvecs_;
  Vector eigvals_;  // eigenvalues of pi * V
};

Vector group_prox(const Vector& r, double pi, const Matrix& V, double kappa);

}  // namespace rfuse
