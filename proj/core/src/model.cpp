#include "secest/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace secest::model {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double logsumexp(const std::vector<double>& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// Standard gamma variate, Marsaglia-Tsang, deterministic under CounterRng.
double gamma_sample(double shape, CounterRng& rng) {
  if (shape < 1.0) {
    const double u = std::max(rng.uniform(), 1e-300);
    return gamma_sample(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v;
  }
}

double log_gauss_pdf(double z) { return -0.5 * (z * z + kLog2Pi); }

// log [Phi(z1) - Phi(z2)] for z1 > z2, stable in both tails.
double log_gauss_cdf_diff(double z1, double z2) {
  const double inv_sqrt2 = 0.70710678118654752440;
  double d;
  if (z1 + z2 > 0.0)
    d = 0.5 * (std::erfc(z2 * inv_sqrt2) - std::erfc(z1 * inv_sqrt2));
  else
    d = 0.5 * (std::erfc(-z1 * inv_sqrt2) - std::erfc(-z2 * inv_sqrt2));
  if (d > 0.0) return std::log(d);
  // deep-tail fallback: mass is dominated by the nearer boundary
  const double zn = (std::abs(z1) < std::abs(z2)) ? z1 : z2;
  return log_gauss_pdf(zn) - std::log(std::max(1.0, std::abs(zn)));
}

}  // namespace

// --- DensityFamily ---------------------------------------------------------

DensityFamily DensityFamily::gaussian_mean_shift(double h, double var,
                                                 double theta) {
  if (!(var > 0.0))
    throw std::invalid_argument("gaussian_mean_shift: var <= 0");
  DensityFamily d;
  d.kind_ = Kind::GaussianMeanShift;
  d.h_ = h;
  d.var_ = var;
  d.theta_ = theta;
  return d;
}

DensityFamily DensityFamily::gaussian_convolved_uniform(double h, double var,
                                                        double a, double b) {
  if (!(var > 0.0))
    throw std::invalid_argument("gaussian_convolved_uniform: var <= 0");
  if (!(a < b)) throw std::invalid_argument("gaussian_convolved_uniform: a >= b");
  DensityFamily d;
  d.kind_ = Kind::GaussianConvolvedUniform;
  d.h_ = h;
  d.var_ = var;
  d.a_ = a;
  d.b_ = b;
  return d;
}

DensityFamily DensityFamily::gaussian_variance_param(double theta) {
  DensityFamily d;
  d.kind_ = Kind::GaussianVarianceParam;
  d.theta_ = theta;
  return d;
}

double DensityFamily::log_density(double y, double x) const {
  switch (kind_) {
    case Kind::GaussianMeanShift: {
      const double s = std::sqrt(var_);
      const double z = (y - h_ * x - theta_) / s;
      return log_gauss_pdf(z) - std::log(s);
    }
    case Kind::GaussianConvolvedUniform: {
      const double s = std::sqrt(var_);
      const double mu = h_ * x;
      const double z1 = (y - mu - a_) / s;
      const double z2 = (y - mu - b_) / s;
      return log_gauss_cdf_diff(z1, z2) - std::log(b_ - a_);
    }
    case Kind::GaussianVarianceParam: {
      if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
      const double z = (y - theta_) / std::sqrt(x);
      return log_gauss_pdf(z) - 0.5 * std::log(x);
    }
  }
  throw std::logic_error("log_density: bad kind");
}

double DensityFamily::sample(double x, CounterRng& rng) const {
  switch (kind_) {
    case Kind::GaussianMeanShift:
      return h_ * x + theta_ + std::sqrt(var_) * rng.normal();
    case Kind::GaussianConvolvedUniform:
      return h_ * x + std::sqrt(var_) * rng.normal() + rng.uniform(a_, b_);
    case Kind::GaussianVarianceParam:
      if (!(x > 0.0))
        throw std::invalid_argument("sample: variance parameter <= 0");
      return theta_ + std::sqrt(x) * rng.normal();
  }
  throw std::logic_error("sample: bad kind");
}

double DensityFamily::support_radius() const {
  const double s = std::sqrt(var_);
  switch (kind_) {
    case Kind::GaussianMeanShift:
      return 10.0 * s;
    case Kind::GaussianConvolvedUniform:
      return 10.0 * s + std::max(std::abs(a_), std::abs(b_));
    case Kind::GaussianVarianceParam:
      return 10.0 * s;
  }
  throw std::logic_error("support_radius: bad kind");
}

// --- ParameterPrior --------------------------------------------------------

ParameterPrior ParameterPrior::gaussian(double mean, double var) {
  if (!(var > 0.0)) throw std::invalid_argument("prior gaussian: var <= 0");
  ParameterPrior p;
  p.kind_ = Kind::Gaussian;
  p.a_ = mean;
  p.b_ = var;
  return p;
}

ParameterPrior ParameterPrior::uniform(double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("prior uniform: lo >= hi");
  ParameterPrior p;
  p.kind_ = Kind::Uniform;
  p.a_ = lo;
  p.b_ = hi;
  return p;
}

ParameterPrior ParameterPrior::inverse_chi_squared(double zeta, double phi) {
  if (!(zeta > 0.0) || !(phi > 0.0))
    throw std::invalid_argument("prior inverse_chi_squared: nonpositive");
  ParameterPrior p;
  p.kind_ = Kind::InverseChiSquared;
  p.a_ = zeta;
  p.b_ = phi;
  return p;
}

ParameterPrior ParameterPrior::point_mass(double x0) {
  ParameterPrior p;
  p.kind_ = Kind::PointMass;
  p.a_ = x0;
  return p;
}

double ParameterPrior::log_density(double x) const {
  switch (kind_) {
    case Kind::Gaussian: {
      const double s = std::sqrt(b_);
      const double z = (x - a_) / s;
      return log_gauss_pdf(z) - std::log(s);
    }
    case Kind::Uniform:
      return (x >= a_ && x <= b_)
                 ? -std::log(b_ - a_)
                 : -std::numeric_limits<double>::infinity();
    case Kind::InverseChiSquared: {
      if (!(x > 0.0)) return -std::numeric_limits<double>::infinity();
      const double shape = a_ / 2.0, scale = a_ * b_ / 2.0;
      return shape * std::log(scale) - std::lgamma(shape) -
             (shape + 1.0) * std::log(x) - scale / x;
    }
    case Kind::PointMass:
      throw std::invalid_argument("point-mass prior has no density");
  }
  throw std::logic_error("log_density: bad kind");
}

double ParameterPrior::sample(CounterRng& rng) const {
  switch (kind_) {
    case Kind::Gaussian:
      return a_ + std::sqrt(b_) * rng.normal();
    case Kind::Uniform:
      return rng.uniform(a_, b_);
    case Kind::InverseChiSquared: {
      // zeta*phi / X ~ chi-squared(zeta)
      const double chi2 = 2.0 * gamma_sample(a_ / 2.0, rng);
      return a_ * b_ / chi2;
    }
    case Kind::PointMass:
      return a_;
  }
  throw std::logic_error("sample: bad kind");
}

double ParameterPrior::u_lo() const {
  switch (kind_) {
    case Kind::Gaussian:
      return a_ - 10.0 * std::sqrt(b_);
    case Kind::Uniform:
      return a_;
    case Kind::InverseChiSquared: {
      const double shape = a_ / 2.0, scale = a_ * b_ / 2.0;
      return std::log(scale / shape) - 12.0 / std::sqrt(shape) - 8.0;
    }
    case Kind::PointMass:
      return a_;
  }
  throw std::logic_error("u_lo: bad kind");
}

double ParameterPrior::u_hi() const {
  switch (kind_) {
    case Kind::Gaussian:
      return a_ + 10.0 * std::sqrt(b_);
    case Kind::Uniform:
      return b_;
    case Kind::InverseChiSquared: {
      const double shape = a_ / 2.0, scale = a_ * b_ / 2.0;
      return std::log(scale / shape) + 12.0 / std::sqrt(shape) + 8.0;
    }
    case Kind::PointMass:
      return a_;
  }
  throw std::logic_error("u_hi: bad kind");
}

double ParameterPrior::log_density_u(double u) const {
  if (log_parameterized()) return log_density(std::exp(u)) + u;
  return log_density(u);
}

// --- PosteriorQuad ---------------------------------------------------------

double PosteriorQuad::mean() const {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::exp(logw[i]) * x[i];
  return s;
}

double PosteriorQuad::variance() const {
  const double m = mean();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - m;
    s += std::exp(logw[i]) * d * d;
  }
  return s;
}

double PosteriorQuad::expectation(
    const std::function<double(double)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::exp(logw[i]) * f(x[i]);
  return s;
}

PosteriorQuad posterior_quadrature(const ParameterPrior& prior,
                                   const std::function<double(double)>& loglik,
                                   int nodes) {
  if (prior.is_point_mass()) {
    PosteriorQuad q;
    q.x = {prior.point()};
    q.logw = {0.0};
    q.log_marginal = loglik(prior.point());
    return q;
  }

  const double ulo = prior.u_lo(), uhi = prior.u_hi();
  auto log_integrand = [&](double u) {
    const double lp = prior.log_density_u(u);
    if (!std::isfinite(lp)) return -std::numeric_limits<double>::infinity();
    return loglik(prior.x_of_u(u)) + lp;
  };

  // Coarse scan locates the mode of the (unimodal) posterior integrand.
  const int M = std::max(96, nodes);
  const double spacing = (uhi - ulo) / (M + 1);
  int kbest = -1;
  double gbest = -std::numeric_limits<double>::infinity();
  std::vector<double> g(M);
  for (int k = 0; k < M; ++k) {
    g[k] = log_integrand(ulo + spacing * (k + 1));
    if (g[k] > gbest) {
      gbest = g[k];
      kbest = k;
    }
  }
  if (!std::isfinite(gbest))
    throw std::runtime_error("posterior_quadrature: likelihood vanishes");

  const double ustar = ulo + spacing * (kbest + 1);
  double sd = uhi - ulo;
  if (kbest > 0 && kbest < M - 1) {
    const double curv = (g[kbest - 1] - 2.0 * g[kbest] + g[kbest + 1]) /
                        (spacing * spacing);
    if (curv < -1e-12) sd = 1.0 / std::sqrt(-curv);
  }

  const num::QuadRule& rule = num::gauss_legendre(nodes);
  auto pass = [&](double lo, double hi, PosteriorQuad& q) {
    lo = std::max(lo, ulo);
    hi = std::min(hi, uhi);
    if (!(lo < hi)) {
      lo = ulo;
      hi = uhi;
    }
    const double c = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    q.x.resize(nodes);
    q.logw.resize(nodes);
    for (int i = 0; i < nodes; ++i) {
      const double u = c + half * rule.x[i];
      q.x[i] = prior.x_of_u(u);
      q.logw[i] = log_integrand(u) + std::log(rule.w[i] * half);
    }
    q.log_marginal = logsumexp(q.logw);
    for (double& lw : q.logw) lw -= q.log_marginal;
    // posterior moments in u for refinement
    double mu = 0.0, m2 = 0.0;
    for (int i = 0; i < nodes; ++i) {
      const double u = c + half * rule.x[i];
      const double w = std::exp(q.logw[i]);
      mu += w * u;
      m2 += w * u * u;
    }
    return std::pair<double, double>(mu, std::sqrt(std::max(0.0, m2 - mu * mu)));
  };

  PosteriorQuad q;
  const double h1 = std::max(10.0 * sd, 2.0 * spacing);
  auto [mu1, sd1] = pass(ustar - h1, ustar + h1, q);
  if (sd1 > 0.0) {
    const double h2 = std::max(10.0 * sd1, 1e-12);
    pass(mu1 - h2, mu1 + h2, q);
  }
  return q;
}

// --- ModelSpace ------------------------------------------------------------

namespace {

std::vector<AttackScenario> enumerate_scenarios(int m, int K, double eps0) {
  std::vector<AttackScenario> out;
  std::vector<std::vector<int>> subsets;
  for (int size = 1; size <= K; ++size) {
    std::vector<int> idx(size);
    std::iota(idx.begin(), idx.end(), 0);
    for (;;) {
      subsets.push_back(idx);
      int p = size - 1;
      while (p >= 0 && idx[p] == m - size + p) --p;
      if (p < 0) break;
      ++idx[p];
      for (int j = p + 1; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  const double share = (1.0 - eps0) / static_cast<double>(subsets.size());
  int index = 1;
  for (auto& s : subsets)
    out.push_back(AttackScenario{index++, std::move(s), share});
  return out;
}

}  // namespace

ModelSpace::ModelSpace(int m, int n, int K, double eps0,
                       std::vector<AttackScenario> scenarios,
                       std::vector<DensityFamily> attack_free_marginals,
                       std::vector<DensityFamily> compromised_marginals,
                       ParameterPrior prior)
    : m_(m),
      n_(n),
      K_(K),
      eps0_(eps0),
      scenarios_(std::move(scenarios)),
      g0_(std::move(attack_free_marginals)),
      g1_(std::move(compromised_marginals)),
      prior_(std::move(prior)) {
  if (m_ < 1) throw std::invalid_argument("ModelSpace: m < 1");
  if (n_ < 1) throw std::invalid_argument("ModelSpace: n < 1");
  if (K_ < 1 || K_ > m_) throw std::invalid_argument("ModelSpace: bad K");
  if (!(eps0_ >= 0.0) || !(eps0_ < 1.0))
    throw std::invalid_argument("ModelSpace: eps0 outside [0, 1)");
  if (static_cast<int>(g0_.size()) != m_ ||
      static_cast<int>(g1_.size()) != m_)
    throw std::invalid_argument("ModelSpace: marginal count != m");

  if (scenarios_.empty()) scenarios_ = enumerate_scenarios(m_, K_, eps0_);

  double total = eps0_;
  int expect = 1;
  for (auto& s : scenarios_) {
    if (s.index != expect++)
      throw std::invalid_argument("ModelSpace: scenario indices not 1..T");
    if (s.coords.empty() || static_cast<int>(s.coords.size()) > K_)
      throw std::invalid_argument("ModelSpace: scenario size outside [1, K]");
    std::vector<int> sorted = s.coords;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("ModelSpace: duplicate coordinate");
    if (sorted.front() < 0 || sorted.back() >= m_)
      throw std::invalid_argument("ModelSpace: coordinate out of range");
    s.coords = std::move(sorted);
    if (!(s.prior > 0.0))
      throw std::invalid_argument("ModelSpace: scenario prior <= 0");
    total += s.prior;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("ModelSpace: priors do not sum to 1");
}

double ModelSpace::attack_posterior(int i) const {
  if (i < 1 || i > T()) throw std::out_of_range("attack_posterior: bad index");
  return scenarios_[i - 1].prior / (1.0 - eps0_);
}

bool ModelSpace::compromised(int hyp, int coord) const {
  if (hyp == 0) return false;
  const auto& c = scenarios_[hyp - 1].coords;
  return std::binary_search(c.begin(), c.end(), coord);
}

double ModelSpace::log_conditional_density(int i, const ObservationBatch& Y,
                                           double X) const {
  if (Y.n != n_ || Y.m != m_)
    throw std::invalid_argument("log_conditional_density: batch shape");
  if (i < 0 || i > T())
    throw std::out_of_range("log_conditional_density: bad hypothesis");
  double s = 0.0;
  for (int l = 0; l < m_; ++l) {
    const DensityFamily& g = compromised(i, l) ? g1_[l] : g0_[l];
    for (int r = 0; r < n_; ++r) s += g.log_density(Y.at(r, l), X);
  }
  return s;
}

double ModelSpace::log_column_density(int branch, int l,
                                      const ObservationBatch& Y,
                                      double X) const {
  const DensityFamily& g = branch == 0 ? g0_[l] : g1_[l];
  double s = 0.0;
  for (int r = 0; r < Y.n; ++r) s += g.log_density(Y.at(r, l), X);
  return s;
}

double ModelSpace::log_marginal_likelihood(int i,
                                           const ObservationBatch& Y) const {
  auto q = posterior_quadrature(
      prior_, [&](double x) { return log_conditional_density(i, Y, x); },
      quadrature_nodes);
  return q.log_marginal;
}

Estimate ModelSpace::marginal_likelihood(int i, const ObservationBatch& Y,
                                         const MonteCarloConfig& mc) const {
  return num::mc_expectation(
      [&](CounterRng& rng) {
        const double x = prior_.sample(rng);
        return std::exp(log_conditional_density(i, Y, x));
      },
      mc);
}

double ModelSpace::log_column_marginal(int branch, int l,
                                       const ObservationBatch& Y) const {
  auto q = posterior_quadrature(
      prior_, [&](double x) { return log_column_density(branch, l, Y, x); },
      quadrature_nodes);
  return q.log_marginal;
}

double ModelSpace::log_mixture_density(const ObservationBatch& Y) const {
  if (eps0_ >= 1.0)
    throw std::invalid_argument("log_mixture_density: no attack mass");
  std::vector<double> terms(T());
  for (int i = 1; i <= T(); ++i)
    terms[i - 1] =
        std::log(attack_posterior(i)) + log_marginal_likelihood(i, Y);
  return logsumexp(terms);
}

Estimate ModelSpace::mixture_density(const ObservationBatch& Y,
                                     const MonteCarloConfig& mc) const {
  Estimate out;
  double var = 0.0;
  for (int i = 1; i <= T(); ++i) {
    const double w = attack_posterior(i);
    const Estimate e = marginal_likelihood(i, Y, mc);
    out.mean += w * e.mean;
    var += w * w * e.std_error * e.std_error;
  }
  out.std_error = std::sqrt(var);
  return out;
}

std::pair<double, ObservationBatch> ModelSpace::sample(
    int i, std::uint64_t seed, std::optional<double> X_fixed) const {
  if (i < 0 || i > T()) throw std::out_of_range("sample: bad hypothesis");
  CounterRng rng(seed, static_cast<std::uint64_t>(i));
  const double X = X_fixed ? *X_fixed : prior_.sample(rng);
  ObservationBatch Y(n_, m_);
  for (int r = 0; r < n_; ++r)
    for (int l = 0; l < m_; ++l) {
      const DensityFamily& g = compromised(i, l) ? g1_[l] : g0_[l];
      Y.at(r, l) = g.sample(X, rng);
    }
  return {X, Y};
}

ModelSpace ModelSpace::with_sample_count(int n) const {
  ModelSpace out = *this;
  if (n < 1) throw std::invalid_argument("with_sample_count: n < 1");
  out.n_ = n;
  return out;
}

}  // namespace secest::model
