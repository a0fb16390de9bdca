#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "secest/numerics.hpp"
#include "secest/rng.hpp"

namespace secest::model {

using num::Estimate;
using num::MonteCarloConfig;

// One-dimensional observation family g(y | X). All shipped kinds have full
// support on the real line.
class DensityFamily {
 public:
  enum class Kind {
    GaussianMeanShift,       // y | X ~ N(h*X + theta, var)
    GaussianConvolvedUniform,// y | X ~ N(h*X, var) * Unif[a, b]
    GaussianVarianceParam,   // y | X ~ N(theta, X), X > 0 is the parameter
  };

  static DensityFamily gaussian_mean_shift(double h, double var,
                                           double theta = 0.0);
  static DensityFamily gaussian_convolved_uniform(double h, double var,
                                                  double a, double b);
  static DensityFamily gaussian_variance_param(double theta);

  double log_density(double y, double x) const;
  double sample(double x, CounterRng& rng) const;

  Kind kind() const { return kind_; }
  // location family in X: required by the error-exponent decomposition
  bool is_location_family() const {
    return kind_ != Kind::GaussianVarianceParam;
  }
  double h() const { return h_; }
  double var() const { return var_; }
  double theta() const { return theta_; }
  double unif_lo() const { return a_; }
  double unif_hi() const { return b_; }
  // half-width of the effective support around the location, for quadrature
  double support_radius() const;

 private:
  Kind kind_;
  double h_ = 0.0, var_ = 1.0, theta_ = 0.0, a_ = 0.0, b_ = 0.0;
};

class ParameterPrior {
 public:
  enum class Kind { Gaussian, Uniform, InverseChiSquared, PointMass };

  static ParameterPrior gaussian(double mean, double var);
  static ParameterPrior uniform(double lo, double hi);
  static ParameterPrior inverse_chi_squared(double zeta, double phi);
  // testing-only degenerate prior; closed-form paths reject it
  static ParameterPrior point_mass(double x0);

  Kind kind() const { return kind_; }
  bool is_point_mass() const { return kind_ == Kind::PointMass; }
  double point() const { return a_; }
  double zeta() const { return a_; }
  double phi() const { return b_; }

  double log_density(double x) const;
  double sample(CounterRng& rng) const;

  // Integration domain in the working variable u (u = x, except
  // u = log x for the inverse chi-squared prior).
  bool log_parameterized() const { return kind_ == Kind::InverseChiSquared; }
  double u_lo() const;
  double u_hi() const;
  double x_of_u(double u) const { return log_parameterized() ? std::exp(u) : u; }
  // log prior density in u, Jacobian included
  double log_density_u(double u) const;

 private:
  Kind kind_;
  double a_ = 0.0, b_ = 1.0;  // (mean,var) | (lo,hi) | (zeta,phi) | (x0,-)
};

struct AttackScenario {
  int index = 0;                // 1..T
  std::vector<int> coords;      // 0-based coordinate indices, sorted
  double prior = 0.0;           // epsilon_i
};

struct ObservationBatch {
  int n = 0, m = 0;
  std::vector<double> data;  // row-major, n x m

  ObservationBatch() = default;
  ObservationBatch(int n_, int m_) : n(n_), m(m_), data(n_ * m_, 0.0) {}
  double& at(int r, int l) { return data[r * m + l]; }
  double at(int r, int l) const { return data[r * m + l]; }
};

// Adaptive posterior quadrature: nodes, normalized log-weights, and the log
// marginal likelihood log ∫ exp(loglik(x)) π(x) dx.
struct PosteriorQuad {
  double log_marginal = 0.0;
  std::vector<double> x;
  std::vector<double> logw;  // normalized: logsumexp(logw) = 0

  double mean() const;
  double variance() const;
  double expectation(const std::function<double(double)>& f) const;
};

PosteriorQuad posterior_quadrature(const ParameterPrior& prior,
                                   const std::function<double(double)>& loglik,
                                   int nodes = 48);

class ModelSpace {
 public:
  // Builds and validates the space. If scenarios is empty, all subsets of
  // size <= K are enumerated and given equal share of (1 - eps0).
  ModelSpace(int m, int n, int K, double eps0,
             std::vector<AttackScenario> scenarios,
             std::vector<DensityFamily> attack_free_marginals,
             std::vector<DensityFamily> compromised_marginals,
             ParameterPrior prior);

  int m() const { return m_; }
  int n() const { return n_; }
  int K() const { return K_; }
  int T() const { return static_cast<int>(scenarios_.size()); }
  double eps0() const { return eps0_; }
  const std::vector<AttackScenario>& scenarios() const { return scenarios_; }
  const ParameterPrior& prior() const { return prior_; }
  const DensityFamily& marginal(int branch, int l) const {
    return branch == 0 ? g0_[l] : g1_[l];
  }
  // scenario prior normalized by P(attack): epsilon_i / (1 - eps0)
  double attack_posterior(int i) const;

  bool compromised(int hyp, int coord) const;

  // sum over samples and coordinates of log g_l^{b(i,l)}(Y(r,l) | X)
  double log_conditional_density(int i, const ObservationBatch& Y,
                                 double X) const;
  // single-column version, branch in {0, 1}
  double log_column_density(int branch, int l, const ObservationBatch& Y,
                            double X) const;

  // f_i(Y) = ∫ f_i(Y|X) π(X) dX, quadrature over the scalar prior
  double log_marginal_likelihood(int i, const ObservationBatch& Y) const;
  Estimate marginal_likelihood(int i, const ObservationBatch& Y,
                               const MonteCarloConfig& mc) const;

  // per-coordinate marginal with the prior integrated out:
  // g_l^j(Y_l) = ∫ Π_r g_l^j(Y(r,l)|X) π(X) dX
  double log_column_marginal(int branch, int l,
                             const ObservationBatch& Y) const;

  // (1/(1-eps0)) Σ_i eps_i f_i(Y)
  double log_mixture_density(const ObservationBatch& Y) const;
  Estimate mixture_density(const ObservationBatch& Y,
                           const MonteCarloConfig& mc) const;

  // Draws (X, Y) under hypothesis i (0 = attack-free). If X_fixed is set the
  // prior draw is skipped. Deterministic given seed.
  std::pair<double, ObservationBatch> sample(
      int i, std::uint64_t seed, std::optional<double> X_fixed = {}) const;

  // Copy with a different per-coordinate sample count (exponent sweeps).
  ModelSpace with_sample_count(int n) const;

  int quadrature_nodes = 48;

 private:
  int m_, n_, K_;
  double eps0_;
  std::vector<AttackScenario> scenarios_;
  std::vector<DensityFamily> g0_, g1_;
  ParameterPrior prior_;
};

}  // namespace secest::model
