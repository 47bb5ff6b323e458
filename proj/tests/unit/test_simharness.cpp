#include <algorithm>

#include "helpers.hpp"
#include "rfuse/simharness.hpp"

using namespace rfuse;
using namespace rfuse::test;

namespace {

bool same_metrics(const SimResult& a, const SimResult& b) {
  if (a.metrics.size() != b.metrics.size()) return false;
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    const auto& x = a.metrics[i];
    const auto& y = b.metrics[i];
    if (x.estimator != y.estimator || x.failures != y.failures) return false;
    // Bitwise comparison; NaN never appears in these runs.
    if (x.nb != y.nb || x.sse != y.sse || x.equiv_dist != y.equiv_dist) return false;
    if (x.selection_rate != y.selection_rate || x.coverage != y.coverage) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("bias matrix entries") {
  const Matrix B = bias_matrix_B();
  REQUIRE(B.rows() == 3);
  REQUIRE(B.cols() == 10);
  CHECK(B(0, 2) == 5.0);
  CHECK(B(1, 5) == -1.0);
  CHECK(B.col(0).isZero(0.0));
  CHECK(B.col(1).isZero(0.0));
  CHECK(B.row(0) == (Eigen::RowVectorXd(10) << 0, 0, 5, -1, 1, 1, -2, -2, 5, -1).finished());
  CHECK(B.row(1) == (Eigen::RowVectorXd(10) << 0, 0, 0, 0, 0, -1, 0, 2, 5, -1).finished());
  CHECK(B.row(2) == (Eigen::RowVectorXd(10) << 0, 0, 0, 0, -1, 1, 2, -2, 5, 1).finished());
}

TEST_CASE("regression biases repeat the pattern across blocks") {
  const auto b = regression_biases(6, 20, 0.5);
  REQUIRE(b.size() == 20);
  const Matrix B = bias_matrix_B();
  for (int k = 0; k < 20; ++k) {
    CHECK(b[k].head(3) == 0.5 * B.col(k % 10));
    CHECK(b[k].tail(3) == 0.5 * B.col(k % 10));
  }
}

TEST_CASE("linear design truth and noiseless fits") {
  auto design = SimDesign::named("table1");
  design.noise_sd = 0.0;
  auto rng = substream(1, 0, 0);
  const auto s = dgp_linear(design, rng);
  CHECK(s.truth.theta0 == vec({2, 1, -1}));
  CHECK(s.truth.unbiased_set == IndexSet{0, 1});
  REQUIRE(s.sources.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(s.sources[k].theta == s.truth.source_limit(k));
    CHECK(s.sources[k].n == 500);
  }
}

TEST_CASE("noisy linear fits carry a covariance") {
  auto design = SimDesign::named("table1");
  design.n_star = 100;
  auto rng = substream(2, 0, 0);
  const auto s = dgp_linear(design, rng);
  for (const auto& src : s.sources) {
    REQUIRE(src.cov.has_value());
    CHECK(is_spd(*src.cov));
    // (X'X)^{-1} with X ~ N(0, 3I) has diagonal near 1/(3n).
    CHECK(src.cov->diagonal().mean() == doctest::Approx(1.0 / 300.0).epsilon(0.5));
  }
}

TEST_CASE("logistic design truth") {
  const auto design = SimDesign::named("table3");
  auto rng = substream(1, 0, 0);
  const auto s = dgp_logistic(design, rng);
  CHECK((s.truth.theta0 - vec({0.2, 0.1, -0.1})).norm() <= 1e-15);
  CHECK((s.truth.biases[2] - vec({2.5, 0, 0})).norm() <= 1e-15);
  CHECK(1.0 / (1.0 + std::exp(-0.0)) == 0.5);
  for (const auto& src : s.sources) {
    REQUIRE(src.cov.has_value());
    CHECK(is_spd(*src.cov));
  }
}

TEST_CASE("MR instruments with zero noise") {
  auto design = SimDesign::named("table5");
  design.mr.sigma1 = 0.0;
  design.mr.sigma2 = 0.0;
  design.mr.beta_mean = 0.05;
  design.mr.beta_sd = 0.0;
  design.mr.negative_fraction = 0.0;
  const auto bb = mr_beta_bar(design);
  REQUIRE(bb.size() == 160);
  CHECK(bb[0] == 0.05);
  auto rng = substream(1, 0, 0);
  const auto s = dgp_mr(design, bb, rng);
  REQUIRE(s.sources.size() == 160);
  CHECK(s.sources[0].theta[0] == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(s.sources[120].theta[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.truth.unbiased_set.size() == 60);
  CHECK(s.truth.unbiased_set.front() == 100);
}

TEST_CASE("MR surrogate strengths and drops") {
  const auto design = SimDesign::named("table5");
  const auto bb = mr_beta_bar(design);
  int negative = 0;
  for (double b : bb) {
    CHECK(std::abs(b) >= design.mr.beta_floor);
    negative += b < 0.0 ? 1 : 0;
  }
  CHECK(negative == 35);
  CHECK(mr_beta_bar(design) == bb);

  auto weak = design;
  weak.mr.drop_epsilon = 0.03;  // drops roughly half of the instruments
  auto rng = substream(1, 0, 0);
  const auto s = dgp_mr(weak, bb, rng);
  CHECK(s.sources.size() < 160);
  CHECK(s.warnings.size() == 160 - s.sources.size());
}

TEST_CASE("counterexample threshold") {
  CHECK(counterexample_h_star(0.1) == doctest::Approx(0.430727299).epsilon(1e-8));
  CHECK(std::abs(counterexample_h_star(0.5 - 1e-12)) < 1e-11);
  CHECK(error_code_of([] { counterexample_h_star(0.5); }) == ErrorCode::InvalidDesign);
  CHECK(error_code_of([] { counterexample_h_star(0.0); }) == ErrorCode::InvalidDesign);
}

TEST_CASE("counterexample exceedance is a probability and deterministic") {
  const auto a = counterexample_median(20, 2000, 0.1, 50, 9, 1);
  const auto b = counterexample_median(20, 2000, 0.1, 50, 9, 4);
  CHECK(a.exceedance >= 0.0);
  CHECK(a.exceedance <= 1.0);
  CHECK(a.exceedance == b.exceedance);
  CHECK(a.threshold == doctest::Approx(std::sqrt(20.0) * a.h_star / std::sqrt(2000.0)));
  CHECK(error_code_of([] { counterexample_median(30, 1000, 0.1, 5, 1); }) == ErrorCode::InvalidDesign);
}

TEST_CASE("design validation") {
  auto d = SimDesign::named("table1");
  d.d = 4;
  CHECK(error_code_of([&] { d.validate(); }) == ErrorCode::InvalidDesign);
  d = SimDesign::named("table1");
  d.K = 15;
  CHECK(error_code_of([&] { d.validate(); }) == ErrorCode::InvalidDesign);
  d = SimDesign::named("table1");
  d.replicates = 0;
  CHECK(error_code_of([&] { d.validate(); }) == ErrorCode::InvalidDesign);
  d = SimDesign::named("table1");
  d.n_star = 2;
  CHECK(error_code_of([&] { d.validate(); }) == ErrorCode::InvalidDesign);
  CHECK(error_code_of([] { SimDesign::named("table9"); }) == ErrorCode::InvalidDesign);
  CHECK(error_code_of([] {
          auto c = SimDesign::named("counterexample");
          c.tau = 0.7;
          c.validate();
        }) == ErrorCode::InvalidDesign);
}

TEST_CASE("substreams are reproducible and distinct") {
  auto a = substream(5, 3, 0);
  auto b = substream(5, 3, 0);
  auto c = substream(5, 4, 0);
  auto e = substream(5, 3, 1);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != e());
}

TEST_CASE("one replicate run twice gives identical metrics") {
  auto design = SimDesign::named("table1");
  design.replicates = 1;
  design.seed = 77;
  const auto a = run_replications(design);
  const auto b = run_replications(design);
  CHECK(metrics_csv_rows(a) == metrics_csv_rows(b));
}

TEST_CASE("results do not depend on the thread count") {
  for (const char* name : {"table1", "table3", "table5"}) {
    auto design = SimDesign::named(name);
    design.replicates = 24;
    design.seed = 3;
    SimOptions one, many;
    many.threads = 5;
    const auto a = run_replications(design, one);
    const auto b = run_replications(design, many);
    CHECK(same_metrics(a, b));
    CHECK(metrics_csv_rows(a) == metrics_csv_rows(b));
  }
}

TEST_CASE("naive and oracle coincide without bias") {
  auto design = SimDesign::named("table2");
  design.replicates = 20;
  const auto r = run_replications(design);
  const auto& naive = r.at(EstimatorKind::Naive);
  const auto& oracle = r.at(EstimatorKind::Oracle);
  CHECK(naive.nb == oracle.nb);
  CHECK(naive.sse == oracle.sse);
  CHECK(naive.equiv_dist == 0.0);
  CHECK(naive.coverage == oracle.coverage);
}

TEST_CASE("small linear cell has near-zero bias") {
  auto design = SimDesign::named("table1");
  design.n_star = 100;
  design.seed = 7;
  const auto r = run_replications(design);
  CHECK(r.at(EstimatorKind::Oracle).nb <= 0.02);
  CHECK(r.at(EstimatorKind::Penalized).nb <= 0.02);
  CHECK(r.at(EstimatorKind::Naive).nb == doctest::Approx(0.987).epsilon(0.05));
  CHECK(r.generation_failures == 0);
  CHECK(r.bound_violations == 0);
  CHECK(r.bound_checked == 200);
}

TEST_CASE("naive bias matches the analytic limit") {
  // Mean of the ten bias columns.
  const Vector limit = bias_matrix_B().rowwise().mean();
  const double analytic = limit.norm();
  auto design = SimDesign::named("table1");
  design.seed = 11;
  for (int n : {100, 200, 500}) {
    design.n_star = n;
    const auto r = run_replications(design);
    CHECK(std::abs(r.at(EstimatorKind::Naive).nb - analytic) <= 0.05 * analytic);
  }
}

TEST_CASE("metrics CSV shape") {
  auto design = SimDesign::named("table1");
  design.replicates = 3;
  const auto r = run_replications(design);
  const std::string rows = metrics_csv_rows(r);
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 5);
  CHECK(metrics_csv_header().rfind("design,family,d,K,n_star", 0) == 0);
  CHECK(rows.find("table1,linear,3,10,500,1,3,1,identity,1,penalized,") != std::string::npos);
}

TEST_CASE("simulations reject explicit weighting") {
  auto design = SimDesign::named("table1");
  design.replicates = 1;
  design.weighting = WeightingKind::Explicit;
  CHECK(error_code_of([&] { run_replications(design); }) == ErrorCode::InvalidDesign);
}
