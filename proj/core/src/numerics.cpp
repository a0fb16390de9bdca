#include "secest/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

namespace secest::num {

Estimate mc_expectation(const std::function<double(CounterRng&)>& integrand,
                        const MonteCarloConfig& cfg) {
  if (cfg.samples < 1) throw std::invalid_argument("mc_expectation: samples < 1");

  const std::size_t n = cfg.samples;
  // Fixed block structure: per-block partial sums are merged in index order
  // regardless of how blocks are assigned to threads.
  constexpr std::size_t kBlock = 4096;
  const std::size_t nblocks = (n + kBlock - 1) / kBlock;
  std::vector<double> sum(nblocks, 0.0), sumsq(nblocks, 0.0);

  auto run_block = [&](std::size_t b) {
    const std::size_t lo = b * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      CounterRng rng(cfg.seed, i);
      const double v = integrand(rng);
      s += v;
      s2 += v * v;
    }
    sum[b] = s;
    sumsq[b] = s2;
  };

  const unsigned workers = std::max(1u, cfg.workers);
  if (workers == 1 || nblocks == 1) {
    for (std::size_t b = 0; b < nblocks; ++b) run_block(b);
  } else {
    std::vector<std::thread> pool;
    std::size_t per = (nblocks + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b0 = w * per, b1 = std::min(nblocks, b0 + per);
      if (b0 >= b1) break;
      pool.emplace_back([&, b0, b1] {
        for (std::size_t b = b0; b < b1; ++b) run_block(b);
      });
    }
    for (auto& t : pool) t.join();
  }

  double total = 0.0, total2 = 0.0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    total += sum[b];
    total2 += sumsq[b];
  }
  if (std::isnan(total)) throw std::runtime_error("mc_expectation: NaN integrand");

  Estimate est;
  est.mean = total / static_cast<double>(n);
  if (n > 1) {
    const double var =
        std::max(0.0, (total2 - total * total / static_cast<double>(n)) /
                          static_cast<double>(n - 1));
    est.std_error = std::sqrt(var / static_cast<double>(n));
  }
  return est;
}

std::pair<double, double> golden_section_min(
    const std::function<double(double)>& f, double lo, double hi, double tol) {
  if (!(lo < hi)) throw std::invalid_argument("golden_section_min: lo >= hi");
  constexpr double kInvPhi = 0.6180339887498948482;
  double a = lo, b = hi;
  double x1 = b - kInvPhi * (b - a);
  double x2 = a + kInvPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  if (std::isnan(f1) || std::isnan(f2))
    throw std::runtime_error("golden_section_min: non-finite objective");
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kInvPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kInvPhi * (b - a);
      f2 = f(x2);
    }
    if (std::isnan(f1) || std::isnan(f2))
      throw std::runtime_error("golden_section_min: non-finite objective");
  }
  const double xm = 0.5 * (a + b);
  return {xm, f(xm)};
}

double bisect(const std::function<bool(double)>& predicate, double lo,
              double hi, double tol) {
  if (!(lo < hi)) throw std::invalid_argument("bisect: lo >= hi");
  bool plo = predicate(lo);
  bool phi = predicate(hi);
  if (plo && phi) return lo;
  if (!plo && !phi)
    throw std::runtime_error("bisect: predicate constant on bracket");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (predicate(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

double empirical_quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("empirical_quantile: empty");
  if (p <= 0.0) return sorted.front();
  if (p >= 1.0) return sorted.back();
  // type-1: smallest order statistic with F(x) >= p
  const std::size_t n = sorted.size();
  std::size_t k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  if (k < 1) k = 1;
  if (k > n) k = n;
  return sorted[k - 1];
}

double empirical_quantile(std::vector<double> samples, double p) {
  std::sort(samples.begin(), samples.end());
  return empirical_quantile_sorted(samples, p);
}

namespace {
void compositions(int dim, int total, std::vector<int>& cur,
                  std::vector<std::vector<double>>& out, int denom) {
  if (dim == 1) {
    cur.push_back(total);
    std::vector<double> v(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i)
      v[i] = static_cast<double>(cur[i]) / static_cast<double>(denom);
    out.push_back(std::move(v));
    cur.pop_back();
    return;
  }
  for (int k = 0; k <= total; ++k) {
    cur.push_back(k);
    compositions(dim - 1, total - k, cur, out, denom);
    cur.pop_back();
  }
}
}  // namespace

std::vector<std::vector<double>> simplex_grid(int dim, int resolution) {
  if (dim <= 0) throw std::invalid_argument("simplex_grid: dim <= 0");
  if (resolution < 2) throw std::invalid_argument("simplex_grid: resolution < 2");
  std::vector<std::vector<double>> out;
  std::vector<int> cur;
  compositions(dim, resolution - 1, cur, out, resolution - 1);
  return out;
}

const QuadRule& gauss_legendre(int n) {
  static std::map<int, QuadRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  QuadRule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      pp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    r.x[i] = -z;
    r.x[n - 1 - i] = z;
    r.w[i] = r.w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
  return cache.emplace(n, std::move(r)).first->second;
}

}  // namespace secest::num
