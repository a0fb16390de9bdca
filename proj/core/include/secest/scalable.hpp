#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "secest/bayes.hpp"
#include "secest/model.hpp"

namespace secest::scalable {

using model::DensityFamily;
using model::ModelSpace;
using model::ObservationBatch;
using num::MonteCarloConfig;

// Counters report conditional-density evaluations per observation scalar;
// the constant quadrature-node factor is excluded.
struct BinaryDetector {
  double log_threshold = 0.0;
  double target_alpha = 0.0;
};

// Threshold of the mixture/attack-free likelihood-ratio test fixed at the
// (1-alpha) quantile under the attack-free model. Needs alpha*samples >= 100.
BinaryDetector calibrate_np_threshold(const ModelSpace& model, double alpha,
                                      const MonteCarloConfig& mc);

bool np_detect(const ModelSpace& model, const ObservationBatch& Y,
               const BinaryDetector& det, std::uint64_t* evals = nullptr);

// Scenario index 1..T maximizing posterior mass f_i(Y) * p_i, where p_i
// defaults to the scenario priors renormalized on the attack event.
int isolate_optimal(const ModelSpace& model, const ObservationBatch& Y,
                    const std::vector<double>& scenario_posterior = {},
                    std::uint64_t* evals = nullptr);

// Scenario index maximizing the sum over its coordinates of per-coordinate
// prior-integrated log likelihood ratios; touches each coordinate once.
int isolate_lr(const ModelSpace& model, const ObservationBatch& Y,
               std::uint64_t* evals = nullptr);

enum class IsolationKind { Optimal, MarginalLR };

struct Density1D {
  std::function<double(double)> log_pdf;
  double lo = 0.0, hi = 0.0;
};

Density1D density_at(const DensityFamily& g, double x);

// log of the Chernoff coefficient integral at mixing weight lambda
double chernoff_coefficient(const Density1D& g, const Density1D& h,
                            double lambda);
// C(g, h) = -min over lambda in (0,1) of the coefficient
double chernoff_information(const Density1D& g, const Density1D& h,
                            double tol = 1e-6);

// Worst-case pairwise isolation exponent from the per-coordinate Chernoff
// decomposition; requires every marginal to be a location family in X.
double predicted_exponent(const ModelSpace& model);

struct ExponentReport {
  double predicted = 0.0;
  std::vector<int> n_grid;
  std::vector<double> p_err;
  std::vector<double> neg_log_perr;
  std::vector<double> se;        // of -log p_err
  std::vector<bool> flagged;     // under 20 error events; excluded from fit
  double slope = 0.0;
  double slope_se = 0.0;
};

// Isolation error rate versus per-coordinate sample count, with a weighted
// least-squares decay-slope fit.
ExponentReport empirical_exponent(const ModelSpace& model, IsolationKind kind,
                                  const std::vector<int>& n_grid,
                                  const MonteCarloConfig& mc);

struct CoordinateEstimate {
  int coord = 0;
  int branch = 0;
  double estimate = 0.0;
  double cost = 0.0;  // posterior cost of the coordinate estimate
  bool reliable = false;
};

CoordinateEstimate coordinate_estimate(const ModelSpace& model, int l,
                                       int branch, const ObservationBatch& Y);

struct ReliabilityTest {
  int coord = 0;
  int branch = 0;
  double threshold = 0.0;  // retain when cost < threshold
  double tie_prob = 1.0;   // retain with this probability at the threshold
  double rho = 0.0;        // correct-classification probability
  double nu = 0.0;         // unconditional retention target

  // u is a uniform draw resolving the randomized boundary; the
  // randomization makes the retention constraint hold with equality even
  // when the cost distribution has atoms (a conjugate posterior variance
  // is a single atom).
  bool retain(double cost, double u) const {
    if (cost < threshold) return true;
    return cost <= threshold && u < tie_prob;
  }
};

// Fixes the cost threshold so that the unconditional probability of both
// classifying the coordinate correctly and retaining it equals nu. Throws
// when nu exceeds the achievable classification probability.
ReliabilityTest calibrate_reliability(const ModelSpace& model,
                                      const BinaryDetector& det,
                                      IsolationKind kind, int l, int branch,
                                      double nu, const MonteCarloConfig& mc);

// Inverse-cost weighted combination of the retained estimates.
double fuse(const std::vector<CoordinateEstimate>& reliable);

struct PipelineCalibration {
  BinaryDetector detector;
  IsolationKind isolation = IsolationKind::MarginalLR;
  std::vector<ReliabilityTest> tests;
};

struct PipelineResult {
  bool attack_declared = false;
  int isolated = 0;  // 0 when no attack declared
  std::vector<CoordinateEstimate> coords;
  double estimate = 0.0;
  bool fallback = false;  // nothing retained; attack-free full-batch estimate
  std::uint64_t evals = 0;
};

// tie_seed feeds the randomized reliability boundary; runs with the same
// seed and data are identical.
PipelineResult scalable_pipeline(const ModelSpace& model,
                                 const ObservationBatch& Y,
                                 const PipelineCalibration& calib,
                                 std::uint64_t tie_seed = 0);

struct DetectionRates {
  double fa = 0.0, md = 0.0;
  double fa_se = 0.0, md_se = 0.0;
};

// Realized false-alarm and prior-weighted miss rates of a calibrated
// detector over fresh draws.
DetectionRates measure_detection(const ModelSpace& model,
                                 const BinaryDetector& det,
                                 const MonteCarloConfig& mc);

}  // namespace secest::scalable
