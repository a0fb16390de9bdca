#include "secest/optimal.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace secest::optimal {

namespace {

void check_lambda(const LagrangeVector& lambda, int T) {
  if (static_cast<int>(lambda.l.size()) != T + 3)
    throw std::invalid_argument("lagrange vector: size != T+3");
  double s = 0.0;
  for (double v : lambda.l) {
    if (!(v >= 0.0)) throw std::invalid_argument("lagrange vector: negative");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("lagrange vector: does not sum to 1");
}

int default_resolution(int T) { return T <= 1 ? 21 : 13; }

}  // namespace

double SampleCache::cost_quantile(double p) const {
  std::vector<double> v;
  for (const auto& group : pts)
    for (const auto& pt : group)
      v.push_back(*std::max_element(pt.cost.begin(), pt.cost.end()));
  return num::empirical_quantile(std::move(v), p);
}

SampleCache build_cache(const ModelSpace& model, const CostFunction& cost,
                        const MonteCarloConfig& mc) {
  if (mc.samples < 1) throw std::invalid_argument("build_cache: samples < 1");
  SampleCache cache;
  cache.T = model.T();
  cache.eps0 = model.eps0();
  for (int i = 1; i <= cache.T; ++i)
    cache.post.push_back(model.attack_posterior(i));
  cache.pts.resize(cache.T + 1);
  cache.w.resize(cache.T + 1);

  const std::size_t N = mc.samples;
  for (int h = 0; h <= cache.T; ++h) {
    cache.pts[h].resize(N);
    cache.w[h].assign(N, 1.0 / static_cast<double>(N));
  }

  auto fill_point = [&](int h, std::size_t k) {
    const std::uint64_t seed = mc.seed + 0x100000001ull * k;
    auto [X, Y] = model.sample(h, seed);
    (void)X;
    CachePoint& pt = cache.pts[h][k];
    std::vector<double> logf(cache.T + 1);
    pt.cost.resize(cache.T + 1);
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j <= cache.T; ++j) {
      logf[j] = model.log_marginal_likelihood(j, Y);
      pt.cost[j] = bayes::optimal_model_estimate(model, j, Y, cost)
                       .posterior_cost;
      m = std::max(m, logf[j]);
    }
    pt.f.resize(cache.T + 1);
    for (int j = 0; j <= cache.T; ++j) pt.f[j] = std::exp(logf[j] - m);
  };

  const unsigned workers = std::max(1u, mc.workers);
  const std::size_t total = static_cast<std::size_t>(cache.T + 1) * N;
  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t t = lo; t < hi; ++t)
      fill_point(static_cast<int>(t / N), t % N);
  };
  if (workers == 1) {
    run_range(0, total);
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (total + workers - 1) / workers;
    for (unsigned wk = 0; wk < workers; ++wk) {
      const std::size_t lo = wk * per, hi = std::min(total, lo + per);
      if (lo >= hi) break;
      pool.emplace_back(run_range, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  return cache;
}

std::vector<double> scores_at(const CachePoint& pt,
                              const std::vector<double>& post,
                              const LagrangeVector& lambda, double u) {
  const int T = static_cast<int>(post.size());
  const double ld = lambda.l[T + 1];  // detection multiplier
  const double lf = lambda.l[T + 2];  // false-alarm multiplier
  double mix = 0.0;
  for (int j = 1; j <= T; ++j) mix += post[j - 1] * pt.f[j];
  std::vector<double> a(T + 1);
  a[0] = lambda.l[0] * pt.f[0] * (pt.cost[0] - u) + ld * mix;
  for (int i = 1; i <= T; ++i)
    a[i] = lambda.l[i] * pt.f[i] * (pt.cost[i] - u) +
           ld * (mix - post[i - 1] * pt.f[i]) + lf * pt.f[0];
  return a;
}

int select_from_scores(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] < scores[best]) best = i;
  return best;
}

std::vector<double> lagrangian_scores(const ModelSpace& model,
                                      const LagrangeVector& lambda, double u,
                                      const ObservationBatch& Y,
                                      const CostFunction& cost) {
  check_lambda(lambda, model.T());
  CachePoint pt;
  pt.f.resize(model.T() + 1);
  pt.cost.resize(model.T() + 1);
  for (int j = 0; j <= model.T(); ++j) {
    pt.f[j] = std::exp(model.log_marginal_likelihood(j, Y));
    pt.cost[j] =
        bayes::optimal_model_estimate(model, j, Y, cost).posterior_cost;
  }
  std::vector<double> post;
  for (int i = 1; i <= model.T(); ++i) post.push_back(model.attack_posterior(i));
  return scores_at(pt, post, lambda, u);
}

RulePerformance evaluate_rule(
    const SampleCache& cache,
    const std::function<int(const CachePoint&)>& rule) {
  const int T = cache.T;
  RulePerformance out;
  out.j_i.assign(T + 1, 0.0);
  out.mass.assign(T + 1, 0.0);
  std::vector<double> cost_mass(T + 1, 0.0);
  double md_var = 0.0;

  for (int h = 0; h <= T; ++h) {
    double wrong = 0.0, wsq = 0.0;
    for (std::size_t k = 0; k < cache.pts[h].size(); ++k) {
      const double wk = cache.w[h][k];
      const int sel = rule(cache.pts[h][k]);
      if (sel == h) {
        out.mass[h] += wk;
        cost_mass[h] += wk * cache.pts[h][k].cost[h];
      } else {
        wrong += wk;
      }
      wsq += wk * wk;
    }
    const double se = std::sqrt(
        std::max(0.0, wsq * wrong * (1.0 - wrong)));
    if (h == 0) {
      out.p_fa = wrong;
      out.p_fa_se = se;
    } else {
      out.p_md += cache.post[h - 1] * wrong;
      md_var += cache.post[h - 1] * cache.post[h - 1] * se * se;
    }
  }
  out.p_md_se = std::sqrt(md_var);

  out.j = 0.0;
  for (int h = 0; h <= T; ++h) {
    if (out.mass[h] > 0.0) {
      out.j_i[h] = cost_mass[h] / out.mass[h];
      out.j = std::max(out.j, out.j_i[h]);
    } else {
      out.j_i[h] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

namespace {

// Worst constraint slack of the rule induced by lambda at level u.
double gamma_of(const SampleCache& cache, const std::vector<double>& lam,
                double alpha, double beta, double u) {
  const int T = cache.T;
  LagrangeVector lambda{lam};
  std::vector<double> slack(T + 1, 0.0);
  double miss = 0.0, fa = 0.0;
  for (int h = 0; h <= T; ++h) {
    for (std::size_t k = 0; k < cache.pts[h].size(); ++k) {
      const CachePoint& pt = cache.pts[h][k];
      const double wk = cache.w[h][k];
      const int sel = select_from_scores(scores_at(pt, cache.post, lambda, u));
      if (sel == h)
        slack[h] += wk * (pt.cost[h] - u);
      else if (h == 0)
        fa += wk;
      else
        miss += cache.post[h - 1] * wk;
    }
  }
  double g = std::max(miss - beta, fa - alpha);
  for (int h = 0; h <= T; ++h) g = std::max(g, slack[h]);
  return g;
}

}  // namespace

FeasibilityResult feasibility_R(const SampleCache& cache, double alpha,
                                double beta, double u, int resolution) {
  const int T = cache.T;
  if (resolution <= 0) resolution = default_resolution(T);
  const auto grid = num::simplex_grid(T + 3, resolution);

  std::vector<double> gammas(grid.size());
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  auto run = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k)
      gammas[k] = gamma_of(cache, grid[k], alpha, beta, u);
  };
  if (workers <= 1 || grid.size() < 64) {
    run(0, grid.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (grid.size() + workers - 1) / workers;
    for (unsigned wk = 0; wk < workers; ++wk) {
      const std::size_t lo = wk * per, hi = std::min(grid.size(), lo + per);
      if (lo >= hi) break;
      pool.emplace_back(run, lo, hi);
    }
    for (auto& t : pool) t.join();
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (gammas[k] < gammas[best]) best = k;

  // local pairwise transfer refinement around the best grid vertex
  std::vector<double> lam = grid[best];
  double g = gammas[best];
  const int dim = T + 3;
  double step = 0.5 / (resolution - 1);
  for (int round = 0; round < 6; ++round) {
    bool improved = false;
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) {
        if (i == j || lam[j] < step) continue;
        std::vector<double> cand = lam;
        cand[i] += step;
        cand[j] -= step;
        const double gc = gamma_of(cache, cand, alpha, beta, u);
        if (gc < g) {
          g = gc;
          lam = std::move(cand);
          improved = true;
        }
      }
    if (!improved) step *= 0.5;
  }
  return FeasibilityResult{g, LagrangeVector{std::move(lam)}};
}

double feasibility_floor(const SampleCache& cache, double alpha) {
  // mixture/attack-free likelihood ratio at every point; common scale cancels
  auto lr = [&](const CachePoint& pt) {
    double mix = 0.0;
    for (int j = 1; j <= cache.T; ++j) mix += cache.post[j - 1] * pt.f[j];
    if (pt.f[0] <= 0.0) return std::numeric_limits<double>::infinity();
    return mix / pt.f[0];
  };

  std::vector<std::pair<double, double>> null_lr;  // (ratio, weight)
  for (std::size_t k = 0; k < cache.pts[0].size(); ++k)
    null_lr.emplace_back(lr(cache.pts[0][k]), cache.w[0][k]);
  std::sort(null_lr.begin(), null_lr.end());
  double cum = 0.0, thr = null_lr.back().first;
  for (const auto& [v, wk] : null_lr) {
    cum += wk;
    if (cum >= 1.0 - alpha) {
      thr = v;
      break;
    }
  }

  double miss = 0.0;
  for (int h = 1; h <= cache.T; ++h)
    for (std::size_t k = 0; k < cache.pts[h].size(); ++k)
      if (lr(cache.pts[h][k]) <= thr)
        miss += cache.post[h - 1] * cache.w[h][k];
  return miss;
}

PerformancePoint solve_P(const SampleCache& cache, double alpha, double beta,
                         double j0, double u_tol, int resolution) {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("solve_P: alpha, beta must be positive");
  PerformancePoint out;
  out.alpha = alpha;
  out.beta = beta;

  const double u_hi = cache.cost_quantile(0.999) + 1e-9;
  FeasibilityResult top = feasibility_R(cache, alpha, beta, u_hi, resolution);
  if (top.gamma > 0.0) {
    const double floor = feasibility_floor(cache, alpha);
    throw InfeasibleError(
        "solve_P: constraints infeasible at every cost level", floor);
  }

  FeasibilityResult at_u = top;
  auto feasible = [&](double u) {
    at_u = feasibility_R(cache, alpha, beta, u, resolution);
    return at_u.gamma <= 0.0;
  };
  out.u_star = num::bisect(feasible, 0.0, u_hi, u_tol);
  if (!feasible(out.u_star)) out.u_star = u_hi;  // refresh at_u at u_star

  out.feasible = true;
  out.lambda = at_u.lambda;
  const LagrangeVector lambda = at_u.lambda;
  const double u = out.u_star;
  out.perf = evaluate_rule(cache, [&, u](const CachePoint& pt) {
    return select_from_scores(scores_at(pt, cache.post, lambda, u));
  });
  out.q = j0 > 0.0 ? out.u_star / j0
                   : std::numeric_limits<double>::quiet_NaN();
  return out;
}

std::vector<PerformancePoint> trace_performance_region(
    const SampleCache& cache, double j0, double alpha,
    const std::vector<double>& betas, double u_tol, int resolution) {
  std::vector<PerformancePoint> out;
  for (double beta : betas) {
    try {
      out.push_back(solve_P(cache, alpha, beta, j0, u_tol, resolution));
    } catch (const InfeasibleError& e) {
      PerformancePoint p;
      p.alpha = alpha;
      p.beta = beta;
      p.feasible = false;
      p.beta_floor = e.beta_floor;
      p.q = std::numeric_limits<double>::quiet_NaN();
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace secest::optimal
