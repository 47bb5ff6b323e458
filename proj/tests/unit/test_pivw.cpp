#include <limits>
#include <numeric>

#include "helpers.hpp"
#include "rfuse/geomedian.hpp"
#include "rfuse/pivw.hpp"

using namespace rfuse;
using namespace rfuse::test;

namespace {

FusionProblem scalar_problem(std::initializer_list<double> thetas, std::int64_t n = 100) {
  std::vector<SourceSummary> s;
  int k = 0;
  for (double t : thetas) s.push_back(source("s" + std::to_string(k++), vec({t}), n));
  return FusionProblem(s);
}

Vector median_start(const FusionProblem& p) {
  return solve_weighted_geometric_median(p.points(), p.weights()).median;
}

IndexSet all_of(std::size_t K) {
  IndexSet s(K);
  std::iota(s.begin(), s.end(), std::size_t{0});
  return s;
}

// Random problem with a majority of near-agreeing sources and a few far ones.
FusionProblem random_problem(std::mt19937_64& rng, Eigen::Index d, std::size_t K, bool invcov) {
  std::uniform_int_distribution<std::int64_t> size(20, 2000);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vector theta0 = gaussian_vector(rng, d);
  std::vector<SourceSummary> s;
  for (std::size_t k = 0; k < K; ++k) {
    const auto n = size(rng);
    Vector t = theta0 + gaussian_vector(rng, d, 1.0 / std::sqrt(static_cast<double>(n)));
    if (unit(rng) < 0.35) t += gaussian_vector(rng, d, 2.0);
    s.push_back(source(std::to_string(k), t, n, random_spd(rng, d, 0.1) / static_cast<double>(n)));
  }
  return FusionProblem(s, invcov ? WeightingScheme::inverse_covariance() : WeightingScheme::identity());
}

}  // namespace

TEST_CASE("oracle IVW over one source returns it") {
  std::mt19937_64 rng(1);
  std::vector<SourceSummary> s{source("a", vec({1, 2}), 10, random_spd(rng, 2) / 10.0),
                               source("b", vec({5, -1}), 30, random_spd(rng, 2) / 30.0)};
  const FusionProblem p(s, WeightingScheme::inverse_covariance());
  const IndexSet one{0};
  CHECK((oracle_ivw(p, one).theta - vec({1, 2})).norm() <= 1e-14);
}

TEST_CASE("oracle IVW with identity metrics is the weighted average") {
  const FusionProblem p({source("a", vec({0, 0})), source("b", vec({2, 2}))});
  CHECK((oracle_ivw(p, all_of(2)).theta - vec({1, 1})).norm() <= 1e-15);
}

TEST_CASE("oracle IVW with explicit scalar metrics") {
  const FusionProblem p({source("a", vec({0})), source("b", vec({3}))},
                        WeightingScheme::explicit_matrices({Matrix::Constant(1, 1, 2.0),
                                                            Matrix::Constant(1, 1, 1.0)}));
  CHECK(oracle_ivw(p, all_of(2)).theta[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("oracle IVW rejects empty or out-of-range subsets") {
  const FusionProblem p({source("a", vec({0}))});
  CHECK(error_code_of([&] { oracle_ivw(p, IndexSet{}); }) == ErrorCode::InvalidProblem);
  CHECK(error_code_of([&] { oracle_ivw(p, IndexSet{3}); }) == ErrorCode::InvalidProblem);
}

TEST_CASE("adaptive weights") {
  const std::vector<SourceSummary> s{source("a", vec({0.1, 0, 0})), source("b", vec({0, 0, 0})),
                                     source("c", vec({2, 0, 0}))};
  const auto w2 = adaptive_weights(Vector::Zero(3), s, 2.0);
  CHECK(w2[0] == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(std::isinf(w2[1]));
  const auto w1 = adaptive_weights(Vector::Zero(3), s, 1.0);
  CHECK(w1[2] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(error_code_of([&] { adaptive_weights(Vector::Zero(3), s, 0.0); }) == ErrorCode::InvalidProblem);
}

TEST_CASE("lambda rules") {
  CHECK(PenaltyConfig::scaled_by_n(2.0).lambda(1000) == doctest::Approx(0.002));
  CHECK(PenaltyConfig::scaled_by_n().lambda(400) == doctest::Approx(0.0025));
  CHECK(PenaltyConfig::explicit_lambda(0.7).lambda(1000) == 0.7);
  CHECK(error_code_of([] { PenaltyConfig::scaled_by_n(-1.0).validate(); }) == ErrorCode::InvalidProblem);
  CHECK(error_code_of([] { PenaltyConfig::explicit_lambda(-1.0).validate(); }) == ErrorCode::InvalidProblem);
}

TEST_CASE("zero-weight policies") {
  const FusionProblem p = scalar_problem({0.0, 0.1, 5.0});
  const Vector start = vec({0.1});
  const auto force = PenalizedProblem::build(p, start, PenaltyConfig::scaled_by_n());
  CHECK(force.forced_zero(1));
  CHECK(std::isinf(force.penalty_level(1)));
  auto cap_cfg = PenaltyConfig::scaled_by_n();
  cap_cfg.zero_weight_policy = ZeroWeightPolicy::CapWeight;
  cap_cfg.weight_cap = 1e6;
  const auto cap = PenalizedProblem::build(p, start, cap_cfg);
  CHECK_FALSE(cap.forced_zero(1));
  CHECK(cap.adaptive_weights[1] == 1e6);
  CHECK(cap.adaptive_weights[0] == doctest::Approx(100.0));
}

TEST_CASE("a single source returns itself") {
  const FusionProblem p({source("only", vec({0.3, -1.2, 4.0}), 50)});
  const auto fit = solve_penalized_ivw(p, median_start(p), PenaltyConfig::scaled_by_n());
  CHECK(fit.estimate.converged());
  CHECK((fit.estimate.theta - vec({0.3, -1.2, 4.0})).norm() <= 1e-14);
  CHECK(*fit.estimate.selected == IndexSet{0});
}

TEST_CASE("a large lambda gives full IVW with every bias at zero") {
  std::mt19937_64 rng(7);
  const FusionProblem p = random_problem(rng, 3, 8, true);
  const Vector start = median_start(p) + vec({0.01, -0.02, 0.03});
  const auto penalty = PenaltyConfig::explicit_lambda(1e6);
  const auto fit = solve_penalized_ivw(p, start, penalty);
  REQUIRE(fit.estimate.converged());
  const Vector full = oracle_ivw(p, all_of(8)).theta;
  CHECK((fit.estimate.theta - full).norm() <= 1e-10);
  CHECK(*fit.estimate.selected == all_of(8));

  // KKT at the exact full-IVW point.
  FusionEstimate exact;
  exact.theta = full;
  exact.biases = std::vector<Vector>(8, Vector::Zero(3));
  const auto kkt = kkt_residual(p, exact, penalty, start);
  CHECK(kkt.max_residual() <= 1e-10);
  CHECK(kkt.worst_zero_margin > 0.0);

  FusionEstimate moved = exact;
  moved.theta[0] += 1e-3;
  CHECK(kkt_residual(p, moved, penalty, start).stationarity_residual_theta > 1e-6);
}

TEST_CASE("d=1, K=3 matches a grid search and selects the first two sources") {
  const FusionProblem p = scalar_problem({0.0, 0.1, 5.0});
  const Vector start = median_start(p);
  const auto penalty = PenaltyConfig::scaled_by_n();
  const auto fit = solve_penalized_ivw(p, start, penalty);
  REQUIRE(fit.estimate.converged());
  CHECK(*fit.estimate.selected == IndexSet{0, 1});

  // Zero tests for the first two blocks at the solution.
  const auto pp = PenalizedProblem::build(p, start, penalty);
  for (std::size_t k : {0u, 1u}) {
    const double pull = pp.weight(k) * std::abs(pp.points[k][0] - fit.estimate.theta[0]);
    CHECK(pull <= pp.penalty_level(k));
  }

  const double h = 1e-3;
  double best = std::numeric_limits<double>::infinity(), theta_at = 0.0, b3_at = 0.0;
  const std::vector<Vector> zero_b{vec({0}), vec({0})};
  for (int i = -500; i <= 500; ++i) {
    const double t = i * h;
    for (int j = 4000; j <= 6000; ++j) {
      const double b3 = j * h;
      const std::vector<Vector> b{vec({0}), vec({0}), vec({b3})};
      const double f = penalized_objective(pp, vec({t}), b);
      if (f < best) best = f, theta_at = t, b3_at = b3;
    }
  }
  CHECK(std::abs(fit.estimate.theta[0] - theta_at) <= 2.0 * h);
  CHECK(std::abs((*fit.estimate.biases)[2][0] - b3_at) <= 2.0 * h);
}

TEST_CASE("d=1 brute force over the full objective") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> spread(-2.0, 2.0);
  const double h = 2e-3;
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t K = 2 + static_cast<std::size_t>(trial % 2);
    std::vector<SourceSummary> s;
    for (std::size_t k = 0; k < K; ++k) s.push_back(source(std::to_string(k), vec({spread(rng)}), 10 + 7 * k));
    const FusionProblem p(s);
    // A large constant makes several zero blocks likely.
    const auto penalty = PenaltyConfig::scaled_by_n(trial % 3 == 0 ? 1.0 : 20.0);
    const Vector start = vec({p.points()[0][0] + 0.05});
    const auto pp = PenalizedProblem::build(p, start, penalty);
    const auto fit = solve_penalized_ivw(pp, start);
    REQUIRE(fit.estimate.converged());

    // Given theta the blocks separate, so a grid over theta with an inner grid
    // per block is an exhaustive grid search of the full objective.
    double best = std::numeric_limits<double>::infinity(), theta_at = 0.0;
    for (int i = -1500; i <= 1500; ++i) {
      const double t = i * h;
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        double inner = std::numeric_limits<double>::infinity();
        for (int j = -2500; j <= 2500; ++j) {
          const double b = j * h;
          const double e = pp.points[k][0] - t - b;
          inner = std::min(inner, 0.5 * pp.weight(k) * e * e + pp.penalty_level(k) * std::abs(b));
        }
        total += inner;
      }
      if (total < best) best = total, theta_at = t;
    }
    CHECK(std::abs(fit.estimate.theta[0] - theta_at) <= 2.0 * h);
    CHECK(fit.estimate.diagnostics.objective <= best + 1e-12);
  }
}

TEST_CASE("every sweep lowers or keeps the objective") {
  std::mt19937_64 rng(17);
  PivwSolverConfig cfg;
  cfg.record_objective = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = random_problem(rng, 1 + trial % 5, 3 + static_cast<std::size_t>(trial % 18), trial % 2 == 0);
    for (bool newton : {true, false}) {
      cfg.newton_acceleration = newton;
      const auto fit = solve_penalized_ivw(p, median_start(p), PenaltyConfig::scaled_by_n(), cfg);
      const auto& tr = fit.objective_trace;
      REQUIRE(tr.size() >= 2);
      for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] <= tr[i - 1] + 1e-14 * std::abs(tr[i - 1]));
    }
  }
}

TEST_CASE("randomized solves pass the KKT check") {
  std::mt19937_64 rng(19);
  std::uniform_int_distribution<int> dim(1, 5), count(1, 20);
  std::uniform_real_distribution<double> log_c(-1.0, 1.5);
  int passed = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = random_problem(rng, dim(rng), static_cast<std::size_t>(count(rng)), trial % 2 == 1);
    const auto penalty = PenaltyConfig::scaled_by_n(std::pow(10.0, log_c(rng)));
    const Vector start = median_start(p);
    const auto fit = solve_penalized_ivw(p, start, penalty);
    const auto kkt = kkt_residual(p, fit.estimate, penalty, start);
    if (fit.estimate.converged() && kkt.passes(1e-6)) ++passed;
  }
  CHECK(passed == 1000);
}

TEST_CASE("oracle expansion holds when the selection is right") {
  std::mt19937_64 rng(23);
  int checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index d = 1 + trial % 4;
    const Vector theta0 = gaussian_vector(rng, d);
    std::vector<SourceSummary> s;
    for (int k = 0; k < 10; ++k) {
      Vector t = theta0 + gaussian_vector(rng, d, 0.01);
      if (k >= 6) t += gaussian_vector(rng, d, 3.0);
      s.push_back(source(std::to_string(k), t, 1000, random_spd(rng, d, 0.1) / 1000.0));
    }
    const FusionProblem p(s, trial % 2 ? WeightingScheme::inverse_covariance() : WeightingScheme::identity());
    const auto penalty = PenaltyConfig::scaled_by_n();
    const Vector start = median_start(p);
    const auto fit = solve_penalized_ivw(p, start, penalty);
    REQUIRE(fit.estimate.converged());
    if (*fit.estimate.selected != IndexSet{0, 1, 2, 3, 4, 5}) continue;
    ++checked;

    const auto pp = PenalizedProblem::build(p, start, penalty);
    Matrix v0 = Matrix::Zero(d, d);
    Vector shift = Vector::Zero(d);
    for (std::size_t k = 0; k < 6; ++k) v0 += pp.weight(k) * pp.metrics[k];
    for (std::size_t k = 6; k < 10; ++k) {
      const Vector& b = (*fit.estimate.biases)[k];
      shift += pp.penalty_level(k) * b / b.norm();
    }
    const Vector expansion = oracle_ivw(p, IndexSet{0, 1, 2, 3, 4, 5}).theta + v0.llt().solve(shift);
    CHECK((fit.estimate.theta - expansion).norm() <= 1e-8 * (1.0 + expansion.norm()));
  }
  CHECK(checked >= 40);
}

TEST_CASE("scaling metrics and lambda together leaves the solution unchanged") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = random_problem(rng, 1 + trial % 5, 4 + static_cast<std::size_t>(trial % 10), true);
    const Vector start = median_start(p);
    const auto base = PenalizedProblem::build(p, start, PenaltyConfig::scaled_by_n());
    auto scaled = base;
    const double c = 0.01 + 7.3 * (trial % 4);
    for (auto& m : scaled.metrics) m *= c;
    scaled.lambda *= c;
    const auto a = solve_penalized_ivw(base, start);
    const auto b = solve_penalized_ivw(scaled, start);
    REQUIRE(a.estimate.converged());
    REQUIRE(b.estimate.converged());
    CHECK((a.estimate.theta - b.estimate.theta).norm() <= 1e-6 * (1.0 + a.estimate.theta.norm()));
    CHECK(*a.estimate.selected == *b.estimate.selected);
    for (std::size_t k = 0; k < p.num_sources(); ++k) {
      CHECK(((*a.estimate.biases)[k] - (*b.estimate.biases)[k]).norm() <= 1e-6);
    }
  }
}

TEST_CASE("kkt residual flags a zero block that should move") {
  const FusionProblem p = scalar_problem({0.0, 0.1, 5.0});
  const Vector start = vec({0.05});
  const auto pp = PenalizedProblem::build(p, start, PenaltyConfig::scaled_by_n());
  const std::vector<Vector> zeros(3, vec({0}));
  const Vector mean = vec({5.1 / 3.0});
  const auto kkt = kkt_residual(pp, mean, zeros);
  CHECK(kkt.worst_zero_margin < 0.0);
  CHECK(kkt.max_residual() > 1e-3);
}

TEST_CASE("sweep cap returns the last iterate as NotConverged") {
  std::mt19937_64 rng(31);
  const auto p = random_problem(rng, 3, 12, false);
  PivwSolverConfig cfg;
  cfg.max_sweeps = 1;
  cfg.newton_acceleration = false;
  cfg.tol = 1e-15;
  const auto fit = solve_penalized_ivw(p, median_start(p), PenaltyConfig::scaled_by_n(), cfg);
  CHECK_FALSE(fit.estimate.converged());
  CHECK(fit.estimate.theta.allFinite());
  CHECK(fit.estimate.diagnostics.iterations == 1);
}

TEST_CASE("zero_blocks uses exact zeros") {
  const std::vector<Vector> b{vec({0, 0}), vec({1e-300, 0}), vec({0, 0})};
  CHECK(zero_blocks(b) == IndexSet{0, 2});
}
