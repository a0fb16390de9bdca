#include "secest/scalable.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <tuple>

namespace secest::scalable {

namespace {

// Deterministic parallel map over trial indices: results land in fixed
// slots, so totals do not depend on the worker count.
template <typename Fn>
void parallel_trials(std::size_t trials, unsigned workers, Fn&& fn) {
  workers = std::max(1u, workers);
  if (workers == 1 || trials < 256) {
    for (std::size_t t = 0; t < trials; ++t) fn(t);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t per = (trials + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * per, hi = std::min(trials, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t t = lo; t < hi; ++t) fn(t);
    });
  }
  for (auto& t : pool) t.join();
}

constexpr std::uint64_t kCalibSalt = 0x6e70636c69627261ull;
constexpr std::uint64_t kRateSalt = 0x7261746573616c74ull;
constexpr std::uint64_t kExpSalt = 0x6578706f73616c74ull;
constexpr std::uint64_t kRelSalt = 0x72656c6961626c65ull;

double log_lr(const ModelSpace& model, const ObservationBatch& Y) {
  return model.log_mixture_density(Y) - model.log_marginal_likelihood(0, Y);
}

int draw_scenario(const ModelSpace& model, CounterRng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  for (int i = 1; i <= model.T(); ++i) {
    cum += model.attack_posterior(i);
    if (u < cum) return i;
  }
  return model.T();
}

}  // namespace

BinaryDetector calibrate_np_threshold(const ModelSpace& model, double alpha,
                                      const MonteCarloConfig& mc) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw std::invalid_argument("calibrate_np_threshold: alpha outside (0,1)");
  if (static_cast<double>(mc.samples) * alpha < 100.0)
    throw std::invalid_argument(
        "calibrate_np_threshold: need alpha * samples >= 100");

  std::vector<double> lrs(mc.samples);
  parallel_trials(mc.samples, mc.workers, [&](std::size_t t) {
    CounterRng rng(mc.seed ^ kCalibSalt, t);
    auto [X, Y] = model.sample(0, rng.next_u64());
    (void)X;
    lrs[t] = log_lr(model, Y);
  });
  for (double v : lrs)
    if (std::isnan(v))
      throw std::runtime_error("calibrate_np_threshold: NaN likelihood ratio");

  BinaryDetector det;
  det.target_alpha = alpha;
  det.log_threshold = num::empirical_quantile(std::move(lrs), 1.0 - alpha);
  return det;
}

bool np_detect(const ModelSpace& model, const ObservationBatch& Y,
               const BinaryDetector& det, std::uint64_t* evals) {
  const double lr = log_lr(model, Y);
  if (std::isnan(lr)) throw std::runtime_error("np_detect: NaN likelihood ratio");
  if (evals)
    *evals += static_cast<std::uint64_t>(model.T() + 1) * model.n() * model.m();
  return lr > det.log_threshold;
}

int isolate_optimal(const ModelSpace& model, const ObservationBatch& Y,
                    const std::vector<double>& scenario_posterior,
                    std::uint64_t* evals) {
  const int T = model.T();
  if (T < 1) throw std::invalid_argument("isolate_optimal: no scenarios");
  std::vector<double> post = scenario_posterior;
  if (post.empty())
    for (int i = 1; i <= T; ++i) post.push_back(model.attack_posterior(i));
  if (static_cast<int>(post.size()) != T)
    throw std::invalid_argument("isolate_optimal: posterior size != T");

  int best = 1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 1; i <= T; ++i) {
    if (!(post[i - 1] > 0.0)) continue;
    const double s =
        model.log_marginal_likelihood(i, Y) + std::log(post[i - 1]);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  if (evals)
    *evals += static_cast<std::uint64_t>(T) * model.n() * model.m();
  return best;
}

int isolate_lr(const ModelSpace& model, const ObservationBatch& Y,
               std::uint64_t* evals) {
  const int T = model.T();
  if (T < 1) throw std::invalid_argument("isolate_lr: no scenarios");
  std::vector<double> llr(model.m());
  for (int l = 0; l < model.m(); ++l)
    llr[l] =
        model.log_column_marginal(1, l, Y) - model.log_column_marginal(0, l, Y);
  if (evals) *evals += 2ull * model.n() * model.m();

  int best = 1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 1; i <= T; ++i) {
    double s = 0.0;
    for (int l : model.scenarios()[i - 1].coords) s += llr[l];
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return best;
}

Density1D density_at(const DensityFamily& g, double x) {
  Density1D d;
  d.log_pdf = [g, x](double y) { return g.log_density(y, x); };
  double center;
  switch (g.kind()) {
    case DensityFamily::Kind::GaussianMeanShift:
      center = g.h() * x + g.theta();
      break;
    case DensityFamily::Kind::GaussianConvolvedUniform:
      center = g.h() * x + 0.5 * (g.unif_lo() + g.unif_hi());
      break;
    case DensityFamily::Kind::GaussianVarianceParam:
      center = g.theta();
      break;
    default:
      throw std::logic_error("density_at: bad kind");
  }
  const double r = g.support_radius();
  d.lo = center - r;
  d.hi = center + r;
  return d;
}

double chernoff_coefficient(const Density1D& g, const Density1D& h,
                            double lambda) {
  if (!(lambda >= 0.0) || !(lambda <= 1.0))
    throw std::invalid_argument("chernoff_coefficient: lambda outside [0,1]");
  const double lo = std::min(g.lo, h.lo), hi = std::max(g.hi, h.hi);
  if (!(lo < hi)) throw std::invalid_argument("chernoff_coefficient: bad range");

  const num::QuadRule& rule = num::gauss_legendre(16);
  const int panels = 64;
  const double width = (hi - lo) / panels;
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(panels * rule.x.size());
  for (int p = 0; p < panels; ++p) {
    const double c = lo + (p + 0.5) * width, half = 0.5 * width;
    for (std::size_t k = 0; k < rule.x.size(); ++k) {
      const double y = c + half * rule.x[k];
      const double t = lambda * g.log_pdf(y) + (1.0 - lambda) * h.log_pdf(y) +
                       std::log(rule.w[k] * half);
      terms.push_back(t);
      best = std::max(best, t);
    }
  }
  if (!std::isfinite(best)) return -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double t : terms) s += std::exp(t - best);
  return best + std::log(s);
}

double chernoff_information(const Density1D& g, const Density1D& h,
                            double tol) {
  auto [lam, v] = num::golden_section_min(
      [&](double l) { return chernoff_coefficient(g, h, l); }, 1e-4,
      1.0 - 1e-4, tol);
  (void)lam;
  return std::max(0.0, -v);
}

double predicted_exponent(const ModelSpace& model) {
  const int T = model.T();
  if (T < 2)
    throw std::invalid_argument("predicted_exponent: needs at least 2 scenarios");
  for (int l = 0; l < model.m(); ++l)
    if (!model.marginal(0, l).is_location_family() ||
        !model.marginal(1, l).is_location_family())
      throw std::invalid_argument(
          "predicted_exponent: marginals must be location families");

  double psi = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= T; ++i) {
    for (int j = i + 1; j <= T; ++j) {
      const auto& si = model.scenarios()[i - 1].coords;
      const auto& sj = model.scenarios()[j - 1].coords;
      std::vector<int> bi, bj;  // coords exclusive to each scenario
      std::set_difference(si.begin(), si.end(), sj.begin(), sj.end(),
                          std::back_inserter(bi));
      std::set_difference(sj.begin(), sj.end(), si.begin(), si.end(),
                          std::back_inserter(bj));
      if (bi.empty() && bj.empty()) return 0.0;

      auto neg_total = [&](double lam) {
        double s = 0.0;
        for (int b : bj)
          s -= chernoff_coefficient(density_at(model.marginal(1, b), 0.0),
                                    density_at(model.marginal(0, b), 0.0), lam);
        for (int b : bi)
          s -= chernoff_coefficient(density_at(model.marginal(0, b), 0.0),
                                    density_at(model.marginal(1, b), 0.0), lam);
        return -s;
      };
      auto [lam, neg] = num::golden_section_min(neg_total, 1e-4, 1.0 - 1e-4,
                                                1e-6);
      (void)lam;
      psi = std::min(psi, std::max(0.0, -neg));
    }
  }
  return psi;
}

ExponentReport empirical_exponent(const ModelSpace& model, IsolationKind kind,
                                  const std::vector<int>& n_grid,
                                  const MonteCarloConfig& mc) {
  if (n_grid.empty())
    throw std::invalid_argument("empirical_exponent: empty grid");
  ExponentReport rep;
  rep.predicted = predicted_exponent(model);
  rep.n_grid = n_grid;

  const std::size_t trials = mc.samples;
  for (int n : n_grid) {
    ModelSpace mn = model.with_sample_count(n);
    mn.quadrature_nodes = 24;
    std::vector<std::uint8_t> err(trials, 0);
    parallel_trials(trials, mc.workers, [&](std::size_t t) {
      CounterRng rng(mc.seed ^ kExpSalt ^ (0x9e37ull * n), t);
      const int truth = draw_scenario(mn, rng);
      auto [X, Y] = mn.sample(truth, rng.next_u64());
      (void)X;
      const int decided = kind == IsolationKind::Optimal
                              ? isolate_optimal(mn, Y)
                              : isolate_lr(mn, Y);
      err[t] = decided != truth ? 1 : 0;
    });
    std::size_t errors = 0;
    for (auto e : err) errors += e;
    const double p = static_cast<double>(errors) / static_cast<double>(trials);
    rep.p_err.push_back(p);
    rep.flagged.push_back(errors < 20);
    if (errors > 0) {
      rep.neg_log_perr.push_back(-std::log(p));
      rep.se.push_back(std::sqrt((1.0 - p) / (p * static_cast<double>(trials))));
    } else {
      rep.neg_log_perr.push_back(std::numeric_limits<double>::infinity());
      rep.se.push_back(std::numeric_limits<double>::infinity());
    }
  }

  // The error probability behaves like K n^{-1/2} e^{-psi n} (local-CLT
  // prefactor), so the regression target is -log p - log(n)/2. Small n also
  // carries curvature beyond the prefactor, so the fit prefers the upper
  // half of the grid when enough points survive there.
  std::vector<int> sorted_n = n_grid;
  std::sort(sorted_n.begin(), sorted_n.end());
  const int n_med = sorted_n[sorted_n.size() / 2];
  auto wls = [&](int n_min) {
    double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int kept = 0;
    for (std::size_t k = 0; k < n_grid.size(); ++k) {
      if (rep.flagged[k] || n_grid[k] < n_min) continue;
      const double w = 1.0 / (rep.se[k] * rep.se[k]);
      const double x = n_grid[k];
      const double y = rep.neg_log_perr[k] - 0.5 * std::log(x);
      sw += w;
      sx += w * x;
      sy += w * y;
      sxx += w * x * x;
      sxy += w * x * y;
      ++kept;
    }
    return std::tuple{kept, sw, sx, sy, sxx, sxy};
  };
  auto [kept, sw, sx, sy, sxx, sxy] = wls(n_med);
  if (kept < 2) std::tie(kept, sw, sx, sy, sxx, sxy) = wls(0);
  if (kept < 2)
    throw std::runtime_error(
        "empirical_exponent: fewer than 2 reliable error estimates");
  const double det = sw * sxx - sx * sx;
  rep.slope = (sw * sxy - sx * sy) / det;
  rep.slope_se = std::sqrt(sw / det);
  return rep;
}

CoordinateEstimate coordinate_estimate(const ModelSpace& model, int l,
                                       int branch, const ObservationBatch& Y) {
  if (l < 0 || l >= model.m())
    throw std::out_of_range("coordinate_estimate: bad coordinate");
  auto q = model::posterior_quadrature(
      model.prior(),
      [&](double x) { return model.log_column_density(branch, l, Y, x); },
      model.quadrature_nodes);
  CoordinateEstimate out;
  out.coord = l;
  out.branch = branch;
  out.estimate = q.mean();
  out.cost = q.variance();
  return out;
}

ReliabilityTest calibrate_reliability(const ModelSpace& model,
                                      const BinaryDetector& det,
                                      IsolationKind kind, int l, int branch,
                                      double nu, const MonteCarloConfig& mc) {
  if (!(nu > 0.0) || !(nu < 1.0))
    throw std::invalid_argument("calibrate_reliability: nu outside (0,1)");

  // hypotheses consistent with the requested branch at coordinate l
  std::vector<int> hyps;
  std::vector<double> wts;
  if (branch == 1) {
    for (int i = 1; i <= model.T(); ++i)
      if (model.compromised(i, l)) {
        hyps.push_back(i);
        wts.push_back(model.scenarios()[i - 1].prior);
      }
  } else {
    if (model.eps0() > 0.0) {
      hyps.push_back(0);
      wts.push_back(model.eps0());
    }
    for (int i = 1; i <= model.T(); ++i)
      if (!model.compromised(i, l)) {
        hyps.push_back(i);
        wts.push_back(model.scenarios()[i - 1].prior);
      }
  }
  double wsum = 0.0;
  for (double w : wts) wsum += w;
  if (hyps.empty() || !(wsum > 0.0))
    throw std::invalid_argument(
        "calibrate_reliability: branch has no prior mass at this coordinate");

  const std::size_t trials = mc.samples;
  std::vector<double> cost(trials, -1.0);  // negative marks misclassified
  parallel_trials(trials, mc.workers, [&](std::size_t t) {
    CounterRng rng(mc.seed ^ kRelSalt ^ (0x51ull * l) ^ (0xb1ull * branch), t);
    const double u = rng.uniform() * wsum;
    double cum = 0.0;
    int truth = hyps.back();
    for (std::size_t k = 0; k < hyps.size(); ++k) {
      cum += wts[k];
      if (u < cum) {
        truth = hyps[k];
        break;
      }
    }
    auto [X, Y] = model.sample(truth, rng.next_u64());
    (void)X;
    int decided = 0;
    if (np_detect(model, Y, det)) {
      const int iso = kind == IsolationKind::Optimal ? isolate_optimal(model, Y)
                                                     : isolate_lr(model, Y);
      decided = model.compromised(iso, l) ? 1 : 0;
    }
    if (decided == branch)
      cost[t] = coordinate_estimate(model, l, branch, Y).cost;
  });

  std::vector<double> kept;
  for (double c : cost)
    if (c >= 0.0) kept.push_back(c);
  const double rho =
      static_cast<double>(kept.size()) / static_cast<double>(trials);
  if (nu > rho)
    throw std::invalid_argument(
        "calibrate_reliability: retention target " + std::to_string(nu) +
        " exceeds classification probability " + std::to_string(rho));

  ReliabilityTest out;
  out.coord = l;
  out.branch = branch;
  out.nu = nu;
  out.rho = rho;
  // threshold at the (nu/rho) quantile; atoms at the threshold are retained
  // with the probability that makes the retained fraction exactly nu/rho
  const double f = nu / rho;
  std::sort(kept.begin(), kept.end());
  out.threshold = num::empirical_quantile_sorted(kept, f);
  double below = 0.0, at = 0.0;
  for (double c : kept) {
    if (c < out.threshold) below += 1.0;
    if (c == out.threshold) at += 1.0;
  }
  const double spread = kept.back() - kept.front();
  if (spread <= 1e-6 * std::max(1.0, std::abs(kept.back()))) {
    // the cost carries no information beyond quadrature noise (conjugate
    // posteriors have a data-independent variance); discarding estimates
    // cannot lower the conditional cost, and the retention constraint is
    // one-sided, so keep everything
    out.threshold = kept.back() + 1e-6 * std::max(1.0, std::abs(kept.back()));
    out.tie_prob = 1.0;
    return out;
  }
  const double want = f * static_cast<double>(kept.size()) - below;
  out.tie_prob = at > 0.0 ? std::clamp(want / at, 0.0, 1.0) : 1.0;
  return out;
}

double fuse(const std::vector<CoordinateEstimate>& reliable) {
  if (reliable.empty()) throw std::invalid_argument("fuse: no estimates");
  for (const auto& e : reliable)
    if (e.cost <= 0.0) return e.estimate;
  double num = 0.0, den = 0.0;
  for (const auto& e : reliable) {
    num += e.estimate / e.cost;
    den += 1.0 / e.cost;
  }
  return num / den;
}

PipelineResult scalable_pipeline(const ModelSpace& model,
                                 const ObservationBatch& Y,
                                 const PipelineCalibration& calib,
                                 std::uint64_t tie_seed) {
  PipelineResult out;
  out.attack_declared = np_detect(model, Y, calib.detector, &out.evals);
  if (out.attack_declared)
    out.isolated = calib.isolation == IsolationKind::Optimal
                       ? isolate_optimal(model, Y, {}, &out.evals)
                       : isolate_lr(model, Y, &out.evals);

  CounterRng ties(tie_seed, 0);
  std::vector<CoordinateEstimate> reliable;
  for (int l = 0; l < model.m(); ++l) {
    const int branch =
        out.attack_declared && model.compromised(out.isolated, l) ? 1 : 0;
    CoordinateEstimate e = coordinate_estimate(model, l, branch, Y);
    out.evals += static_cast<std::uint64_t>(model.n());
    e.reliable = true;
    for (const auto& t : calib.tests)
      if (t.coord == l && t.branch == branch) {
        e.reliable = t.retain(e.cost, ties.uniform());
        break;
      }
    if (e.reliable) reliable.push_back(e);
    out.coords.push_back(e);
  }

  if (reliable.empty()) {
    out.fallback = true;
    out.estimate = bayes::optimal_model_estimate(model, 0, Y).estimate;
  } else {
    out.estimate = fuse(reliable);
  }
  return out;
}

DetectionRates measure_detection(const ModelSpace& model,
                                 const BinaryDetector& det,
                                 const MonteCarloConfig& mc) {
  const std::size_t trials = mc.samples;
  std::vector<std::uint8_t> fa(trials, 0), md(trials, 0);
  parallel_trials(trials, mc.workers, [&](std::size_t t) {
    CounterRng rng(mc.seed ^ kRateSalt, t);
    {
      auto [X, Y] = model.sample(0, rng.next_u64());
      (void)X;
      fa[t] = np_detect(model, Y, det) ? 1 : 0;
    }
    {
      const int truth = draw_scenario(model, rng);
      auto [X, Y] = model.sample(truth, rng.next_u64());
      (void)X;
      md[t] = np_detect(model, Y, det) ? 0 : 1;
    }
  });
  std::size_t nfa = 0, nmd = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    nfa += fa[t];
    nmd += md[t];
  }
  DetectionRates out;
  const double n = static_cast<double>(trials);
  out.fa = static_cast<double>(nfa) / n;
  out.md = static_cast<double>(nmd) / n;
  out.fa_se = std::sqrt(out.fa * (1.0 - out.fa) / n);
  out.md_se = std::sqrt(out.md * (1.0 - out.md) / n);
  return out;
}

}  // namespace secest::scalable
