#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "rfuse/simharness.hpp"

namespace rfuse {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vector base_theta0(int d, double scale) {
  Vector t(d);
  for (int j = 0; j < d; j += 3) {
    t[j] = 2.0 * scale;
    t[j + 1] = 1.0 * scale;
    t[j + 2] = -1.0 * scale;
  }
  return t;
}

Matrix draw_design(int n, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(3.0));
  Matrix X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = gauss(rng);
  return X;
}

struct LogisticFit {
  bool ok = false;
  Vector theta;
  Matrix cov;
};

LogisticFit fit_logistic(const Matrix& X, const Vector& y, double ridge) {
  const auto n = static_cast<double>(X.rows());
  const auto d = X.cols();
  LogisticFit fit;
  Vector theta = Vector::Zero(d);
  for (int it = 0; it < 200; ++it) {
    const Vector eta = X * theta;
    const Vector p = (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    const Vector w = (p.array() * (1.0 - p.array())).matrix();
    const Matrix H = (X.transpose() * w.asDiagonal() * X) / n + ridge * Matrix::Identity(d, d);
    const Vector g = X.transpose() * (p - y) / n + ridge * theta;
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success) return fit;
    const Vector step = llt.solve(g);
    if (!step.allFinite()) return fit;
    theta -= step;
    if (step.norm() <= 1e-10 * (1.0 + theta.norm())) {
      const Vector eta2 = X * theta;
      const Vector p2 = (1.0 / (1.0 + (-eta2.array()).exp())).matrix();
      const Vector w2 = (p2.array() * (1.0 - p2.array())).matrix();
      const Matrix info = X.transpose() * w2.asDiagonal() * X + n * ridge * Matrix::Identity(d, d);
      Eigen::LLT<Matrix> il(info);
      if (il.info() != Eigen::Success) return fit;
      fit.cov = symmetrize(il.solve(Matrix::Identity(d, d)));
      fit.theta = theta;
      fit.ok = theta.allFinite() && is_spd(fit.cov);
      return fit;
    }
  }
  return fit;
}

}  // namespace

const char* to_string(DesignFamily family) noexcept {
  switch (family) {
    case DesignFamily::Linear: return "linear";
    case DesignFamily::Logistic: return "logistic";
    case DesignFamily::MrRatio: return "mr";
    case DesignFamily::MedianCounterexample: return "counterexample";
  }
  return "unknown";
}

const char* to_string(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::Naive: return "naive";
    case EstimatorKind::Oracle: return "oracle";
    case EstimatorKind::Initial: return "initial";
    case EstimatorKind::Penalized: return "penalized";
    case EstimatorKind::Refit: return "refit";
  }
  return "unknown";
}

void SimDesign::validate() const {
  if (replicates < 1) fail(ErrorCode::InvalidDesign, "replicates must be at least 1");
  switch (family) {
    case DesignFamily::Linear:
    case DesignFamily::Logistic:
      if (d < 3 || d % 3 != 0) fail(ErrorCode::InvalidDesign, "d must be a positive multiple of 3");
      if (K < 10 || K % 10 != 0) fail(ErrorCode::InvalidDesign, "K must be a positive multiple of 10");
      if (n_star < 1) fail(ErrorCode::InvalidDesign, "n_star must be positive");
      if (n_star < d) fail(ErrorCode::InvalidDesign, "n_star below d gives a singular design");
      if (!(noise_sd >= 0.0)) fail(ErrorCode::InvalidDesign, "noise sd must be nonnegative");
      if (!(logistic_ridge >= 0.0)) fail(ErrorCode::InvalidDesign, "ridge must be nonnegative");
      break;
    case DesignFamily::MrRatio:
      if (mr.instruments < 1 || mr.invalid < 0 || mr.invalid > mr.instruments) {
        fail(ErrorCode::InvalidDesign, "invalid instrument counts");
      }
      if (!(mr.beta_floor > 0.0) || !(mr.beta_sd >= 0.0) || !(mr.sigma1 >= 0.0) || !(mr.sigma2 >= 0.0)) {
        fail(ErrorCode::InvalidDesign, "invalid surrogate parameters");
      }
      if (!(mr.negative_fraction >= 0.0 && mr.negative_fraction <= 1.0)) {
        fail(ErrorCode::InvalidDesign, "negative fraction must lie in [0, 1]");
      }
      break;
    case DesignFamily::MedianCounterexample:
      if (!(tau > 0.0 && tau < 0.5)) fail(ErrorCode::InvalidDesign, "tau must lie in (0, 1/2)");
      if (K < 1 || total_n < K || total_n % K != 0) {
        fail(ErrorCode::InvalidDesign, "n must be a positive multiple of K");
      }
      break;
  }
}

SimDesign SimDesign::named(const std::string& name) {
  SimDesign d;
  d.name = name;
  if (name == "table1") {
    d.family = DesignFamily::Linear;
  } else if (name == "table2") {
    d.family = DesignFamily::Linear;
    d.bias_scale = 0.0;
  } else if (name == "table3") {
    d.family = DesignFamily::Logistic;
  } else if (name == "table4") {
    d.family = DesignFamily::Logistic;
    d.bias_scale = 0.0;
  } else if (name == "table5") {
    d.family = DesignFamily::MrRatio;
    d.d = 1;
    d.K = d.mr.instruments;
    d.estimators = {EstimatorKind::Naive, EstimatorKind::Oracle, EstimatorKind::Initial,
                    EstimatorKind::Penalized, EstimatorKind::Refit};
  } else if (name == "counterexample") {
    d.family = DesignFamily::MedianCounterexample;
    d.d = 1;
    d.K = 100;
    d.replicates = 500;
  } else {
    fail(ErrorCode::InvalidDesign, "unknown design '" + name + "'");
  }
  return d;
}

Matrix bias_matrix_B() {
  Matrix B(3, 10);
  B << 0, 0, 5, -1, 1, 1, -2, -2, 5, -1,
       0, 0, 0, 0, 0, -1, 0, 2, 5, -1,
       0, 0, 0, 0, -1, 1, 2, -2, 5, 1;
  return B;
}

std::vector<Vector> regression_biases(int d, int K, double scale) {
  const Matrix B = bias_matrix_B();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    Vector b(d);
    for (int j = 0; j < d; j += 3) b.segment(j, 3) = scale * B.col(k % 10);
    out.push_back(b);
  }
  return out;
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(replicate + 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ splitmix64(stream + 0x85157af5d1e4a2c3ULL));
  return std::mt19937_64(h);
}

SimSample dgp_linear(const SimDesign& design, std::mt19937_64& rng) {
  if (design.family != DesignFamily::Linear) fail(ErrorCode::InvalidDesign, "design is not linear");
  design.validate();
  const int d = design.d;
  const int n = design.n_star;
  SimSample out;
  out.truth = GroundTruth::from_biases(base_theta0(d, 1.0), regression_biases(d, design.K, design.bias_scale));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int k = 0; k < design.K; ++k) {
    const Matrix X = draw_design(n, d, rng);
    const Vector beta = out.truth.source_limit(static_cast<std::size_t>(k));
    Vector y = X * beta;
    if (design.noise_sd > 0.0) {
      for (int i = 0; i < n; ++i) y[i] += design.noise_sd * noise(rng);
    }
    const Matrix gram = X.transpose() * X;
    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success) fail(ErrorCode::InvalidDesign, "singular design matrix");
    SourceSummary s;
    s.id = "s" + std::to_string(k + 1);
    s.n = n;
    s.theta = design.noise_sd > 0.0 ? Vector(llt.solve(X.transpose() * y)) : beta;
    if (design.noise_sd > 0.0 && n > d) {
      const double sigma2 = (y - X * s.theta).squaredNorm() / static_cast<double>(n - d);
      s.cov = symmetrize(sigma2 * llt.solve(Matrix::Identity(d, d)));
    }
    out.sources.push_back(std::move(s));
  }
  return out;
}

SimSample dgp_logistic(const SimDesign& design, std::mt19937_64& rng) {
  if (design.family != DesignFamily::Logistic) fail(ErrorCode::InvalidDesign, "design is not logistic");
  design.validate();
  const int d = design.d;
  const int n = design.n_star;
  SimSample out;
  out.truth = GroundTruth::from_biases(base_theta0(d, 0.1),
                                       regression_biases(d, design.K, 0.5 * design.bias_scale));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int k = 0; k < design.K; ++k) {
    const Vector beta = out.truth.source_limit(static_cast<std::size_t>(k));
    LogisticFit fit;
    for (int attempt = 0; attempt < 2 && !fit.ok; ++attempt) {
      if (attempt > 0) ++out.retries;
      const Matrix X = draw_design(n, d, rng);
      const Vector eta = X * beta;
      Vector y(n);
      for (int i = 0; i < n; ++i) y[i] = unif(rng) < 1.0 / (1.0 + std::exp(-eta[i])) ? 1.0 : 0.0;
      fit = fit_logistic(X, y, design.logistic_ridge);
    }
    if (!fit.ok) {
      fail(ErrorCode::NotConverged, "logistic fit failed twice for source " + std::to_string(k + 1));
    }
    SourceSummary s;
    s.id = "s" + std::to_string(k + 1);
    s.n = n;
    s.theta = fit.theta;
    s.cov = fit.cov;
    out.sources.push_back(std::move(s));
  }
  return out;
}

std::vector<double> mr_beta_bar(const SimDesign& design) {
  const auto& mr = design.mr;
  auto rng = substream(design.seed, std::numeric_limits<std::uint64_t>::max(), 1);
  std::normal_distribution<double> gauss(mr.beta_mean, mr.beta_sd);
  const int negatives = static_cast<int>(std::lround(mr.negative_fraction * mr.invalid));
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(mr.instruments));
  for (int k = 0; k < mr.instruments; ++k) {
    double b = 0.0;
    int guard = 0;
    do {
      b = std::abs(gauss(rng));
    } while (b < mr.beta_floor && ++guard < 1000);
    b = std::max(b, mr.beta_floor);
    out.push_back(k < negatives ? -b : b);
  }
  return out;
}

SimSample dgp_mr(const SimDesign& design, std::span<const double> beta_bar, std::mt19937_64& rng) {
  if (design.family != DesignFamily::MrRatio) fail(ErrorCode::InvalidDesign, "design is not MR");
  design.validate();
  const auto& mr = design.mr;
  if (beta_bar.size() != static_cast<std::size_t>(mr.instruments)) {
    fail(ErrorCode::InvalidDesign, "one beta_bar per instrument is required");
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  SimSample out;
  std::vector<Vector> biases;
  for (int k = 0; k < mr.instruments; ++k) {
    const double bb = beta_bar[static_cast<std::size_t>(k)];
    const bool invalid = k < mr.invalid;
    const double shift = invalid ? 0.15 + 3.0 * bb : 0.0;
    const double beta = bb + mr.sigma1 * gauss(rng);
    const double gamma = bb * mr.theta0 + shift + mr.sigma2 * gauss(rng);
    if (std::abs(beta) < mr.drop_epsilon) {
      out.warnings.push_back("instrument " + std::to_string(k + 1) + " dropped: exposure effect near zero");
      continue;
    }
    SourceSummary s;
    s.id = "snp" + std::to_string(k + 1);
    s.theta = Vector::Constant(1, gamma / beta);
    const double var = mr.sigma2 * mr.sigma2 / (beta * beta);
    if (var > 0.0) {
      s.cov = Matrix::Constant(1, 1, var);
      s.n = std::max<std::int64_t>(1, std::llround(1.0 / var));
    } else {
      s.n = 1;
    }
    out.sources.push_back(std::move(s));
    biases.push_back(Vector::Constant(1, shift / bb));
  }
  if (out.sources.empty()) fail(ErrorCode::InvalidDesign, "every instrument was dropped");
  out.truth = GroundTruth::from_biases(Vector::Constant(1, mr.theta0), std::move(biases));
  return out;
}

SimSample dgp_mr(const SimDesign& design, std::mt19937_64& rng) {
  const auto bb = mr_beta_bar(design);
  return dgp_mr(design, bb, rng);
}

double counterexample_h_star(double tau) {
  if (!(tau > 0.0 && tau < 0.5)) fail(ErrorCode::InvalidDesign, "tau must lie in (0, 1/2)");
  const double p = (0.375 + 0.25 * tau) / (0.5 + tau);
  return boost::math::quantile(boost::math::normal(), p);
}

}  // namespace rfuse
