#pragma once

#include <functional>
#include <vector>

#include "secest/model.hpp"

namespace secest::bayes {

using model::ModelSpace;
using model::ObservationBatch;
using num::Estimate;
using num::MonteCarloConfig;

enum class CostKind { SquaredError, AbsoluteError };

struct CostFunction {
  CostKind kind = CostKind::SquaredError;
  double operator()(double x, double u) const {
    const double d = x - u;
    return kind == CostKind::SquaredError ? d * d : std::abs(d);
  }
};

struct ModelEstimate {
  int hypothesis = 0;
  double estimate = 0.0;
  double posterior_cost = 0.0;
};

// E[C(X, u) | Y, H_i] by self-normalized importance sampling from the prior,
// with an automatic posterior-matched proposal when the effective sample size
// collapses.
Estimate posterior_cost(const ModelSpace& model, int i, double u,
                        const ObservationBatch& Y, const CostFunction& cost,
                        const MonteCarloConfig& mc);

// Minimizer of u -> E[C(X, u) | Y, H_i] with its attained cost, computed from
// the posterior quadrature (closed form per cost kind).
ModelEstimate optimal_model_estimate(const ModelSpace& model, int i,
                                     const ObservationBatch& Y,
                                     const CostFunction& cost = {});

// Same quantity found by direct numeric minimization over candidate u values;
// exists so the closed-form path can be cross-checked.
ModelEstimate numeric_model_estimate(const ModelSpace& model, int i,
                                     const ObservationBatch& Y,
                                     const CostFunction& cost = {});

// Closed forms for squared-error cost when every coordinate is N(theta_l, X)
// and X has an inverse chi-squared prior with zeta + n*m > 4.
ModelEstimate gaussian_invchisq_estimate(const std::vector<double>& theta,
                                         double zeta, double phi,
                                         const ObservationBatch& Y);
double gaussian_invchisq_log_marginal(const std::vector<double>& theta,
                                      double zeta, double phi,
                                      const ObservationBatch& Y);

struct AttackFreeBaseline {
  std::function<ModelEstimate(const ObservationBatch&)> estimator;
  Estimate j0;  // expected posterior cost under the attack-free model
};

AttackFreeBaseline attack_free_baseline(const ModelSpace& model,
                                        const CostFunction& cost,
                                        const MonteCarloConfig& mc);

}  // namespace secest::bayes
