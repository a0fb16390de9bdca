#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "secest/bayes.hpp"
#include "secest/model.hpp"

namespace secest::optimal {

using bayes::CostFunction;
using model::ModelSpace;
using model::ObservationBatch;
using num::MonteCarloConfig;

// Multiplier vector for the scoring rule, length T+3:
// [l_0 .. l_T | detection | false-alarm], nonnegative, sums to 1.
struct LagrangeVector {
  std::vector<double> l;
};

// One frozen evaluation point: per-hypothesis densities (any common positive
// scale; selection is invariant to it) and optimal posterior costs.
struct CachePoint {
  std::vector<double> f;     // size T+1
  std::vector<double> cost;  // size T+1
};

// Evaluation set frozen once and reused across every multiplier and every
// bisection step, so all comparisons share the same randomness. Points are
// grouped by the true hypothesis they were drawn from; weights within a group
// sum to 1 (equal 1/N for Monte Carlo draws, exact probabilities for
// discrete models).
struct SampleCache {
  int T = 0;
  double eps0 = 0.0;
  std::vector<double> post;  // attack posteriors eps_i/(1-eps0), size T
  std::vector<std::vector<CachePoint>> pts;  // [hypothesis][point]
  std::vector<std::vector<double>> w;

  // p-quantile of max_i cost_i over all points (bisection upper bracket)
  double cost_quantile(double p) const;
};

SampleCache build_cache(const ModelSpace& model, const CostFunction& cost,
                        const MonteCarloConfig& mc);

// Scores A_0..A_T for one point; the decision picks the minimizer, lowest
// index on ties.
std::vector<double> scores_at(const CachePoint& pt,
                              const std::vector<double>& post,
                              const LagrangeVector& lambda, double u);
int select_from_scores(const std::vector<double>& scores);

// Scores at an actual observation, with true (unscaled) marginal densities.
std::vector<double> lagrangian_scores(const ModelSpace& model,
                                      const LagrangeVector& lambda, double u,
                                      const ObservationBatch& Y,
                                      const CostFunction& cost = {});

struct RulePerformance {
  double p_fa = 0.0, p_md = 0.0;
  double p_fa_se = 0.0, p_md_se = 0.0;
  double j = 0.0;                 // max over hypotheses with selection mass
  std::vector<double> j_i;        // conditional cost per hypothesis
  std::vector<double> mass;       // P(select i | H_i)
};

RulePerformance evaluate_rule(
    const SampleCache& cache,
    const std::function<int(const CachePoint&)>& rule);

struct FeasibilityResult {
  double gamma = 0.0;  // least worst-case constraint slack over the grid
  LagrangeVector lambda;
};

// Scans the multiplier simplex (grid + local refinement) for the rule whose
// worst constraint violation at level u is smallest. Feasible iff gamma <= 0.
FeasibilityResult feasibility_R(const SampleCache& cache, double alpha,
                                double beta, double u, int resolution = 0);

struct InfeasibleError : std::runtime_error {
  InfeasibleError(std::string msg, double floor)
      : std::runtime_error(std::move(msg)), beta_floor(floor) {}
  double beta_floor;
};

struct PerformancePoint {
  double alpha = 0.0, beta = 0.0;
  bool feasible = false;
  double u_star = 0.0;  // minimized worst-case cost
  double q = 0.0;       // u_star / j0
  RulePerformance perf;
  LagrangeVector lambda;
  double beta_floor = 0.0;  // set when infeasible
};

// Smallest worst-case cost subject to P_fa <= alpha and P_md <= beta, by
// bisection on the cost level.
PerformancePoint solve_P(const SampleCache& cache, double alpha, double beta,
                         double j0, double u_tol = 1e-3, int resolution = 0);

// Smallest attainable miss probability at false-alarm level alpha
// (likelihood-ratio test on the frozen cache).
double feasibility_floor(const SampleCache& cache, double alpha);

std::vector<PerformancePoint> trace_performance_region(
    const SampleCache& cache, double j0, double alpha,
    const std::vector<double>& betas, double u_tol = 1e-3,
    int resolution = 0);

}  // namespace secest::optimal
