#include <cmath>
#include <cstdio>

#include "parallel.hpp"
#include "rfuse/simharness.hpp"

namespace rfuse {

CounterexampleResult counterexample_median(int K, int total_n, double tau, int replicates,
                                           std::uint64_t seed, int threads) {
  SimDesign design = SimDesign::named("counterexample");
  design.K = K;
  design.total_n = total_n;
  design.tau = tau;
  design.replicates = replicates;
  design.seed = seed;
  design.validate();

  CounterexampleResult out;
  out.K = K;
  out.total_n = total_n;
  out.tau = tau;
  out.replicates = replicates;
  out.h_star = counterexample_h_star(tau);
  out.threshold = std::sqrt(static_cast<double>(K)) * out.h_star / std::sqrt(static_cast<double>(total_n));

  const int unbiased = static_cast<int>(std::floor((0.5 + tau) * K));
  const double sd = 1.0 / std::sqrt(static_cast<double>(total_n / K));
  const Vector weights = Vector::Constant(K, 1.0 / K);

  std::vector<char> exceeded(static_cast<std::size_t>(replicates), 0);
  detail::parallel_for(exceeded.size(), threads, [&](std::size_t r) {
    auto rng = substream(seed, r, 0);
    std::normal_distribution<double> gauss(0.0, sd);
    std::vector<Vector> points;
    points.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      const double bias = k < unbiased ? 0.0 : 1.0;
      points.push_back(Vector::Constant(1, bias + gauss(rng)));
    }
    const auto gm = solve_weighted_geometric_median(points, weights);
    exceeded[r] = gm.median[0] >= out.threshold ? 1 : 0;
  });
  int hits = 0;
  for (char e : exceeded) hits += e;
  out.exceedance = static_cast<double>(hits) / replicates;
  return out;
}

std::string counterexample_csv(const CounterexampleResult& r) {
  char line[256];
  std::snprintf(line, sizeof line, "counterexample,%d,%d,%.17g,%d,%.17g,%.17g,%.17g\n", r.K,
                r.total_n, r.tau, r.replicates, r.h_star, r.threshold, r.exceedance);
  return std::string("design,K,n,tau,replicates,h_star,threshold,exceedance\n") + line;
}

}  // namespace rfuse
