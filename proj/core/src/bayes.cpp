#include "secest/bayes.hpp"

#include <algorithm>
#include <cmath>

namespace secest::bayes {

namespace {

using model::ParameterPrior;
using model::PosteriorQuad;

// Self-normalized estimate from log-weights and values, with delta-method
// standard error and the effective sample size.
struct SnisResult {
  Estimate est;
  double ess = 0.0;
};

SnisResult snis(const std::vector<double>& logw,
                const std::vector<double>& val) {
  const std::size_t n = logw.size();
  double m = -std::numeric_limits<double>::infinity();
  for (double lw : logw) m = std::max(m, lw);
  if (!std::isfinite(m))
    throw std::runtime_error("posterior_cost: all importance weights vanish");
  double sw = 0.0;
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) {
    w[k] = std::exp(logw[k] - m);
    sw += w[k];
  }
  SnisResult r;
  double mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += w[k] * val[k];
  mean /= sw;
  double var = 0.0, sw2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double wt = w[k] / sw;
    const double d = val[k] - mean;
    var += wt * wt * d * d;
    sw2 += wt * wt;
  }
  r.est.mean = mean;
  r.est.std_error = std::sqrt(var);
  r.ess = 1.0 / sw2;
  return r;
}

}  // namespace

Estimate posterior_cost(const ModelSpace& model, int i, double u,
                        const ObservationBatch& Y, const CostFunction& cost,
                        const MonteCarloConfig& mc) {
  const ParameterPrior& prior = model.prior();
  if (prior.is_point_mass())
    return Estimate{cost(prior.point(), u), 0.0};
  if (mc.samples < 2)
    throw std::invalid_argument("posterior_cost: samples < 2");

  const std::size_t n = mc.samples;
  std::vector<double> logw(n), val(n);
  for (std::size_t k = 0; k < n; ++k) {
    CounterRng rng(mc.seed, k);
    const double x = prior.sample(rng);
    logw[k] = model.log_conditional_density(i, Y, x);
    val[k] = cost(x, u);
  }
  SnisResult r = snis(logw, val);
  if (r.ess >= 0.1 * static_cast<double>(n)) return r.est;

  // Prior proposal degenerated; switch to a Gaussian proposal (in the
  // prior's working variable) matched to the quadrature posterior.
  PosteriorQuad q = model::posterior_quadrature(
      prior, [&](double x) { return model.log_conditional_density(i, Y, x); },
      model.quadrature_nodes);
  double mu = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < q.x.size(); ++k) {
    const double uk =
        prior.log_parameterized() ? std::log(q.x[k]) : q.x[k];
    const double w = std::exp(q.logw[k]);
    mu += w * uk;
    m2 += w * uk * uk;
  }
  const double sd = 2.0 * std::sqrt(std::max(1e-12, m2 - mu * mu));
  const double lognorm = -std::log(sd) - 0.918938533204672742;  // log sqrt(2pi)
  for (std::size_t k = 0; k < n; ++k) {
    CounterRng rng(mc.seed ^ 0x7f4a7c15ull, k);
    const double uu = mu + sd * rng.normal();
    const double x = prior.log_parameterized() ? std::exp(uu) : uu;
    const double z = (uu - mu) / sd;
    const double logq = lognorm - 0.5 * z * z;
    const double lp = prior.log_density_u(uu);
    logw[k] = std::isfinite(lp)
                  ? model.log_conditional_density(i, Y, x) + lp - logq
                  : -std::numeric_limits<double>::infinity();
    val[k] = cost(x, u);
  }
  return snis(logw, val).est;
}

ModelEstimate optimal_model_estimate(const ModelSpace& model, int i,
                                     const ObservationBatch& Y,
                                     const CostFunction& cost) {
  const ParameterPrior& prior = model.prior();
  if (prior.is_point_mass())
    return ModelEstimate{i, prior.point(), 0.0};
  PosteriorQuad q = model::posterior_quadrature(
      prior, [&](double x) { return model.log_conditional_density(i, Y, x); },
      model.quadrature_nodes);

  ModelEstimate out;
  out.hypothesis = i;
  if (cost.kind == CostKind::SquaredError) {
    out.estimate = q.mean();
    out.posterior_cost = q.variance();
    return out;
  }
  // absolute error: posterior median from the interpolated node CDF
  std::vector<std::size_t> order(q.x.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return q.x[a] < q.x[b]; });
  double med = q.x[order.back()];
  double cum = 0.0, prev_c = 0.0, prev_x = q.x[order.front()];
  for (std::size_t k : order) {
    const double w = std::exp(q.logw[k]);
    const double c = cum + 0.5 * w;  // node mass centered on the node
    if (c >= 0.5) {
      med = c > prev_c
                ? prev_x + (q.x[k] - prev_x) * (0.5 - prev_c) / (c - prev_c)
                : q.x[k];
      break;
    }
    prev_c = c;
    prev_x = q.x[k];
    cum += w;
  }
  out.estimate = med;
  out.posterior_cost = q.expectation([&](double x) { return cost(x, med); });
  return out;
}

ModelEstimate numeric_model_estimate(const ModelSpace& model, int i,
                                     const ObservationBatch& Y,
                                     const CostFunction& cost) {
  const ParameterPrior& prior = model.prior();
  if (prior.is_point_mass())
    return ModelEstimate{i, prior.point(), 0.0};
  PosteriorQuad q = model::posterior_quadrature(
      prior, [&](double x) { return model.log_conditional_density(i, Y, x); },
      model.quadrature_nodes);
  const auto [lo, hi] =
      std::minmax_element(q.x.begin(), q.x.end());
  auto risk = [&](double u) {
    return q.expectation([&](double x) { return cost(x, u); });
  };
  const double span = std::max(*hi - *lo, 1e-12);
  auto [ustar, rstar] =
      num::golden_section_min(risk, *lo - 0.01 * span, *hi + 0.01 * span,
                              1e-9 * span);
  return ModelEstimate{i, ustar, rstar};
}

namespace {

void check_invchisq_args(const std::vector<double>& theta, double zeta,
                         double phi, const ObservationBatch& Y) {
  if (static_cast<int>(theta.size()) != Y.m)
    throw std::invalid_argument("invchisq estimate: theta size != m");
  if (!(zeta > 0.0) || !(phi > 0.0))
    throw std::invalid_argument("invchisq estimate: nonpositive prior");
}

double residual_sum(const std::vector<double>& theta,
                    const ObservationBatch& Y) {
  double s = 0.0;
  for (int r = 0; r < Y.n; ++r)
    for (int l = 0; l < Y.m; ++l) {
      const double d = Y.at(r, l) - theta[l];
      s += d * d;
    }
  return s;
}

}  // namespace

ModelEstimate gaussian_invchisq_estimate(const std::vector<double>& theta,
                                         double zeta, double phi,
                                         const ObservationBatch& Y) {
  check_invchisq_args(theta, zeta, phi, Y);
  const double N = static_cast<double>(Y.n) * Y.m;
  if (!(zeta + N > 4.0))
    throw std::invalid_argument("invchisq estimate: zeta + n <= 4");
  const double S = residual_sum(theta, Y);
  const double num = zeta * phi + S;
  ModelEstimate out;
  out.estimate = num / (zeta + N - 2.0);
  out.posterior_cost =
      2.0 * num * num / ((zeta + N - 2.0) * (zeta + N - 2.0) * (zeta + N - 4.0));
  return out;
}

double gaussian_invchisq_log_marginal(const std::vector<double>& theta,
                                      double zeta, double phi,
                                      const ObservationBatch& Y) {
  check_invchisq_args(theta, zeta, phi, Y);
  const double N = static_cast<double>(Y.n) * Y.m;
  const double S = residual_sum(theta, Y);
  return 0.5 * zeta * std::log(zeta * phi) - 0.5 * N * std::log(M_PI) -
         std::lgamma(0.5 * zeta) + std::lgamma(0.5 * (zeta + N)) -
         0.5 * (zeta + N) * std::log(zeta * phi + S);
}

AttackFreeBaseline attack_free_baseline(const ModelSpace& model,
                                        const CostFunction& cost,
                                        const MonteCarloConfig& mc) {
  AttackFreeBaseline out;
  out.estimator = [&model, cost](const ObservationBatch& Y) {
    return optimal_model_estimate(model, 0, Y, cost);
  };
  out.j0 = num::mc_expectation(
      [&](CounterRng& rng) {
        const double X = model.prior().sample(rng);
        ObservationBatch Y(model.n(), model.m());
        for (int r = 0; r < model.n(); ++r)
          for (int l = 0; l < model.m(); ++l)
            Y.at(r, l) = model.marginal(0, l).sample(X, rng);
        return optimal_model_estimate(model, 0, Y, cost).posterior_cost;
      },
      mc);
  if (!(out.j0.mean > 0.0))
    throw std::runtime_error("attack_free_baseline: nonpositive baseline");
  return out;
}

}  // namespace secest::bayes
