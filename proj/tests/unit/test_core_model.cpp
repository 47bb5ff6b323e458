#include <algorithm>
#include <numeric>

#include "helpers.hpp"

using namespace rfuse;
using namespace rfuse::test;

namespace {

std::vector<SourceSummary> sized(std::initializer_list<std::int64_t> ns, Eigen::Index d = 2) {
  std::vector<SourceSummary> out;
  int k = 0;
  for (auto n : ns) out.push_back(source("s" + std::to_string(k++), Vector::Zero(d), n));
  return out;
}

}  // namespace

TEST_CASE("compute_weights on equal sizes") {
  const Vector w = compute_weights(sized({100, 100, 100}));
  for (int k = 0; k < 3; ++k) CHECK(w[k] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("compute_weights direct ratio") {
  const Vector w = compute_weights(sized({100, 300}));
  CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("compute_weights on GWAS-sized samples") {
  const Vector w = compute_weights(sized({152893, 317754}));
  CHECK(std::abs(w[0] - 0.3249) < 5e-5);
  CHECK(std::abs(w[1] - 0.6751) < 5e-5);
  CHECK(w[0] == doctest::Approx(152893.0 / 470647.0).epsilon(1e-14));
}

TEST_CASE("compute_weights rejects an empty list") {
  CHECK(error_code_of([] { compute_weights(std::vector<SourceSummary>{}); }) ==
        ErrorCode::InvalidProblem);
}

TEST_CASE("compute_weights sums to one and permutes with its input") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> size(1, 1000000);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 1 + trial % 25;
    std::vector<SourceSummary> s;
    for (int k = 0; k < K; ++k) s.push_back(source(std::to_string(k), Vector::Zero(1), size(rng)));
    const Vector w = compute_weights(s);
    CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
    std::vector<int> perm(K);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<SourceSummary> shuffled;
    for (int k : perm) shuffled.push_back(s[k]);
    const Vector ws = compute_weights(shuffled);
    for (int k = 0; k < K; ++k) CHECK(ws[k] == w[perm[k]]);
  }
}

TEST_CASE("identity weighting gives identity matrices") {
  const FusionProblem p(sized({10, 20}, 3));
  const auto v = resolve_weighting_matrices(p);
  REQUIRE(v.size() == 2);
  for (const auto& m : v) CHECK(m.isApprox(Matrix::Identity(3, 3)));
}

TEST_CASE("explicit weighting with a negative eigenvalue is rejected") {
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
  CHECK(error_code_of([&] {
          FusionProblem p(sized({10, 20}), WeightingScheme::explicit_matrices({bad, bad}));
          resolve_weighting_matrices(p);
        }) == ErrorCode::InvalidWeightingMatrix);
}

TEST_CASE("explicit weighting passes SPD matrices through") {
  Matrix a(2, 2);
  a << 2.0, 0.5, 0.5, 1.0;
  const FusionProblem p(sized({10, 20}), WeightingScheme::explicit_matrices({a, a * 3.0}));
  const auto v = resolve_weighting_matrices(p);
  CHECK(v[0].isApprox(a));
  CHECK(v[1].isApprox(3.0 * a));
}

TEST_CASE("inverse-covariance weighting of cov = I/n is the identity") {
  std::vector<SourceSummary> s;
  for (std::int64_t n : {50, 400, 12345}) {
    s.push_back(source(std::to_string(n), Vector::Zero(3), n,
                       Matrix::Identity(3, 3) / static_cast<double>(n)));
  }
  const FusionProblem p(s, WeightingScheme::inverse_covariance());
  for (const auto& m : resolve_weighting_matrices(p)) {
    CHECK((m - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("inverse-covariance weighting needs every covariance") {
  auto s = sized({10, 20});
  s[0].cov = Matrix::Identity(2, 2);
  CHECK(error_code_of([&] {
          FusionProblem p(s, WeightingScheme::inverse_covariance());
          resolve_weighting_matrices(p);
        }) == ErrorCode::MissingCovariance);
}

TEST_CASE("resolved weighting matrices are SPD for random valid inputs") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index d = 1 + trial % 5;
    std::vector<SourceSummary> s;
    for (int k = 0; k < 4; ++k) {
      s.push_back(source(std::to_string(k), gaussian_vector(rng, d), 10 + 37 * k,
                         random_spd(rng, d, 0.05)));
    }
    for (auto scheme : {WeightingScheme::identity(), WeightingScheme::inverse_covariance()}) {
      const FusionProblem p(s, scheme);
      for (const auto& m : resolve_weighting_matrices(p)) {
        CHECK(Eigen::LLT<Matrix>(m).info() == Eigen::Success);
      }
    }
  }
}

TEST_CASE("sources must share a dimension") {
  std::vector<SourceSummary> s{source("a", vec({1, 2})), source("b", vec({1, 2, 3}))};
  CHECK(error_code_of([&] { FusionProblem p(s); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("source validation") {
  CHECK(error_code_of([] { validate_source(source("a", vec({1, NAN}))); }) ==
        ErrorCode::InvalidProblem);
  CHECK(error_code_of([] { validate_source(source("a", vec({1}), 0)); }) ==
        ErrorCode::InvalidProblem);
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK(error_code_of([&] { validate_source(source("a", vec({1, 2}), 5, bad)); }) ==
        ErrorCode::NonSpdCovariance);
  CHECK(error_code_of([] { validate_source(source("a", vec({1, 2}), 5, Matrix::Identity(3, 3))); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("explicit weights must be a probability vector") {
  auto s = sized({1, 1});
  CHECK(error_code_of([&] { FusionProblem p(s, vec({0.5, 0.6})); }) == ErrorCode::InvalidProblem);
  CHECK(error_code_of([&] { FusionProblem p(s, vec({1.0, 0.0})); }) == ErrorCode::InvalidProblem);
  const FusionProblem ok(s, vec({0.25, 0.75}));
  CHECK(ok.weights()[1] == 0.75);
}

TEST_CASE("ground truth derives the unbiased set from exact zeros") {
  const auto t = GroundTruth::from_biases(vec({0, 0}), {vec({0, 0}), vec({1e-300, 0}), vec({0, 0})});
  CHECK(t.unbiased_set == IndexSet{0, 2});
  GroundTruth broken = t;
  broken.unbiased_set = {0, 1, 2};
  CHECK(error_code_of([&] { broken.validate(); }) == ErrorCode::InvalidGroundTruth);
  GroundTruth missing = t;
  missing.unbiased_set = {0};
  CHECK(error_code_of([&] { missing.validate(); }) == ErrorCode::InvalidGroundTruth);
}
