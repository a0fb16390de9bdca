#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "secest/rng.hpp"

namespace secest::num {

struct MonteCarloConfig {
  std::size_t samples = 10000;
  std::uint64_t seed = 1;
  double rel_tol = 1e-3;
  unsigned workers = 1;
};

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Sample mean with standard error. The integrand receives a per-sample
// CounterRng substream, so the result is identical for any worker count.
Estimate mc_expectation(const std::function<double(CounterRng&)>& integrand,
                        const MonteCarloConfig& cfg);

// Golden-section minimization of a unimodal function on [lo, hi].
std::pair<double, double> golden_section_min(
    const std::function<double(double)>& f, double lo, double hi, double tol);

// Bisection on a monotone predicate: false at lo, true at hi.
double bisect(const std::function<bool(double)>& predicate, double lo,
              double hi, double tol);

// Type-1 (lower order statistic) empirical quantile; fixed project-wide so
// calibrated thresholds are bit-reproducible.
double empirical_quantile(std::vector<double> samples, double p);
double empirical_quantile_sorted(const std::vector<double>& sorted, double p);

// All compositions of (resolution-1) into dim parts, scaled to sum to 1.
std::vector<std::vector<double>> simplex_grid(int dim, int resolution);

// Gauss-Legendre nodes and weights on [-1, 1], cached per order.
struct QuadRule {
  std::vector<double> x, w;
};
const QuadRule& gauss_legendre(int n);

}  // namespace secest::num
