#pragma once

#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rfuse/core_model.hpp"
#include "rfuse/error.hpp"

namespace rfuse::test {

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline SourceSummary source(std::string id, Vector theta, std::int64_t n = 100,
                            std::optional<Matrix> cov = std::nullopt) {
  return {std::move(id), std::move(theta), n, std::move(cov)};
}

inline Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index d, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v[j] = g(rng);
  return v;
}

// Haar-ish random orthogonal matrix from a QR factorization.
inline Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index d) {
  Matrix a(d, d);
  std::normal_distribution<double> g;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = g(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

inline Matrix random_spd(std::mt19937_64& rng, Eigen::Index d, double floor = 0.2) {
  Matrix a(d, d);
  std::normal_distribution<double> g;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = g(rng);
  return a * a.transpose() / static_cast<double>(d) + floor * Matrix::Identity(d, d);
}

template <class F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an rfuse::Error");
  return ErrorCode::Io;
}

}  // namespace rfuse::test
