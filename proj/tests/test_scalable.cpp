#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "secest/scalable.hpp"

using namespace secest;
using model::DensityFamily;
using model::ModelSpace;
using model::ObservationBatch;
using model::ParameterPrior;
using scalable::IsolationKind;

namespace {

// Two sensors, variance-change attack, distinct gains.
ModelSpace variance_attack_model(double eps0 = 0.2) {
  const double e = (1.0 - eps0) / 2.0;
  std::vector<model::AttackScenario> sc{{1, {0}, e}, {2, {1}, e}};
  return ModelSpace(2, 1, 1, eps0, std::move(sc),
                    {DensityFamily::gaussian_mean_shift(1.0, 2.0),
                     DensityFamily::gaussian_mean_shift(4.0, 2.0)},
                    {DensityFamily::gaussian_mean_shift(1.0, 6.0),
                     DensityFamily::gaussian_mean_shift(4.0, 6.0)},
                    ParameterPrior::gaussian(0.0, 4.0));
}

// Strong mean separation so isolation is near-perfect.
ModelSpace separated_model() {
  std::vector<model::AttackScenario> sc{{1, {0}, 0.4}, {2, {1}, 0.4}};
  return ModelSpace(2, 1, 1, 0.2, std::move(sc),
                    {DensityFamily::gaussian_mean_shift(1.0, 1.0),
                     DensityFamily::gaussian_mean_shift(1.0, 1.0)},
                    {DensityFamily::gaussian_mean_shift(1.0, 1.0, 25.0),
                     DensityFamily::gaussian_mean_shift(1.0, 1.0, 25.0)},
                    ParameterPrior::gaussian(0.0, 1.0));
}

// Uniform-burst attack: the branch-1 posterior cost varies with the data,
// so the reliability threshold is informative.
ModelSpace burst_model() {
  std::vector<model::AttackScenario> sc{{1, {0}, 0.4}, {2, {1}, 0.4}};
  return ModelSpace(
      2, 1, 1, 0.2, std::move(sc),
      {DensityFamily::gaussian_mean_shift(1.0, 1.0),
       DensityFamily::gaussian_mean_shift(1.0, 1.0)},
      {DensityFamily::gaussian_convolved_uniform(1.0, 1.0, -10.0, 10.0),
       DensityFamily::gaussian_convolved_uniform(1.0, 1.0, -10.0, 10.0)},
      ParameterPrior::gaussian(0.0, 3.0));
}

// Analytic Chernoff coefficient for two one-dimensional Gaussians.
double gaussian_chernoff_coeff(double m1, double v1, double m2, double v2,
                               double lam) {
  const double vbar = lam * v2 + (1.0 - lam) * v1;
  return -0.5 * lam * (1.0 - lam) * (m1 - m2) * (m1 - m2) / vbar -
         0.5 * std::log(vbar / (std::pow(v1, 1.0 - lam) * std::pow(v2, lam)));
}

double gaussian_chernoff_info(double m1, double v1, double m2, double v2) {
  double best = 0.0;
  for (int k = 1; k < 2000; ++k) {
    const double lam = k / 2000.0;
    best = std::max(best, -gaussian_chernoff_coeff(m1, v1, m2, v2, lam));
  }
  return best;
}

}  // namespace

TEST_CASE("chernoff information matches the gaussian closed form") {
  auto g = scalable::density_at(DensityFamily::gaussian_mean_shift(1.0, 1.0),
                                0.0);
  auto h = scalable::density_at(
      DensityFamily::gaussian_mean_shift(1.0, 1.0, 2.0), 0.0);
  // equal variances: C = d^2/8
  CHECK(scalable::chernoff_information(g, h) ==
        doctest::Approx(0.5).epsilon(1e-4));

  auto a = scalable::density_at(DensityFamily::gaussian_mean_shift(1.0, 2.0),
                                0.0);
  auto b = scalable::density_at(DensityFamily::gaussian_mean_shift(1.0, 6.0),
                                0.0);
  CHECK(scalable::chernoff_information(a, b) ==
        doctest::Approx(gaussian_chernoff_info(0, 2, 0, 6)).epsilon(1e-3));
}

TEST_CASE("chernoff information is symmetric and zero for equal densities") {
  auto a = scalable::density_at(DensityFamily::gaussian_mean_shift(1.0, 2.0),
                                0.0);
  auto b = scalable::density_at(DensityFamily::gaussian_mean_shift(1.0, 6.0),
                                0.0);
  CHECK(scalable::chernoff_information(a, b) ==
        doctest::Approx(scalable::chernoff_information(b, a)).epsilon(1e-4));
  CHECK(scalable::chernoff_information(a, a) ==
        doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("predicted exponent matches an independent analytic evaluation") {
  ModelSpace m = variance_attack_model();
  const double got = scalable::predicted_exponent(m);
  // scenarios differ on both coordinates; shared mixing weight
  double best = 0.0;
  for (int k = 1; k < 4000; ++k) {
    const double lam = k / 4000.0;
    const double s = -gaussian_chernoff_coeff(0, 6, 0, 2, lam) -
                     gaussian_chernoff_coeff(0, 2, 0, 6, lam);
    best = std::max(best, s);
  }
  CHECK(got == doctest::Approx(best).epsilon(2e-3));
  CHECK(got > 0.0);
}

TEST_CASE("predicted exponent rejects non-location families") {
  std::vector<model::AttackScenario> sc{{1, {0}, 0.4}, {2, {1}, 0.4}};
  ModelSpace m(2, 1, 1, 0.2, std::move(sc),
               {DensityFamily::gaussian_variance_param(0.0),
                DensityFamily::gaussian_variance_param(0.0)},
               {DensityFamily::gaussian_variance_param(1.0),
                DensityFamily::gaussian_variance_param(1.0)},
               ParameterPrior::inverse_chi_squared(6.0, 1.0));
  CHECK_THROWS_AS(scalable::predicted_exponent(m), std::invalid_argument);
}

TEST_CASE("detector calibration hits the target false-alarm rate") {
  ModelSpace m = separated_model();
  num::MonteCarloConfig mc;
  mc.samples = 20000;
  mc.seed = 11;
  mc.workers = 4;
  const auto det = scalable::calibrate_np_threshold(m, 0.1, mc);
  num::MonteCarloConfig eval = mc;
  eval.seed = 12;
  const auto rates = scalable::measure_detection(m, det, eval);
  CHECK(std::abs(rates.fa - 0.1) < 0.015);
  CHECK(rates.md < 0.05);  // wide mean separation: detection is easy
}

TEST_CASE("calibration rejects starved sample budgets") {
  ModelSpace m = separated_model();
  num::MonteCarloConfig mc;
  mc.samples = 500;
  CHECK_THROWS_AS(scalable::calibrate_np_threshold(m, 0.01, mc),
                  std::invalid_argument);
  CHECK_THROWS_AS(scalable::calibrate_np_threshold(m, 1.5, mc),
                  std::invalid_argument);
}

TEST_CASE("both isolation rules identify a well-separated attack") {
  ModelSpace m = separated_model();
  int wrong_opt = 0, wrong_lr = 0;
  for (int k = 0; k < 200; ++k) {
    const int truth = 1 + (k % 2);
    auto [X, Y] = m.sample(truth, 5000 + k);
    (void)X;
    if (scalable::isolate_optimal(m, Y) != truth) ++wrong_opt;
    if (scalable::isolate_lr(m, Y) != truth) ++wrong_lr;
  }
  CHECK(wrong_opt == 0);
  CHECK(wrong_lr == 0);
}

TEST_CASE("isolation workload scales as claimed with the sensor count") {
  for (int mdim : {2, 4, 8}) {
    std::vector<DensityFamily> g0(mdim,
                                  DensityFamily::gaussian_mean_shift(1.0, 1.0)),
        g1(mdim, DensityFamily::gaussian_mean_shift(1.0, 4.0));
    ModelSpace m(mdim, 3, 1, 0.2, {}, g0, g1,
                 ParameterPrior::gaussian(0.0, 1.0));
    auto [X, Y] = m.sample(1, 42);
    (void)X;
    std::uint64_t lr = 0, opt = 0;
    scalable::isolate_lr(m, Y, &lr);
    scalable::isolate_optimal(m, Y, {}, &opt);
    CHECK(lr == 2ull * 3 * mdim);            // one pass per coordinate branch
    CHECK(opt == static_cast<std::uint64_t>(m.T()) * 3 * mdim);
    CHECK(m.T() == mdim);  // full-batch rule touches every scenario
  }
}

TEST_CASE("empirical exponent run is deterministic across worker counts") {
  ModelSpace m = variance_attack_model(0.0);
  num::MonteCarloConfig a;
  a.samples = 4000;
  a.seed = 21;
  a.workers = 1;
  num::MonteCarloConfig b = a;
  b.workers = 8;
  const auto ra = scalable::empirical_exponent(m, IsolationKind::MarginalLR,
                                               {1, 3, 5}, a);
  const auto rb = scalable::empirical_exponent(m, IsolationKind::MarginalLR,
                                               {1, 3, 5}, b);
  CHECK(ra.p_err == rb.p_err);
  CHECK(ra.slope == rb.slope);
  for (double p : ra.p_err) CHECK(p > 0.0);
}

TEST_CASE("coordinate estimate matches the conjugate single-sensor update") {
  ModelSpace m = separated_model();
  ObservationBatch Y(1, 2);
  Y.at(0, 0) = 2.0;
  Y.at(0, 1) = -1.0;
  const auto e = scalable::coordinate_estimate(m, 0, 0, Y);
  CHECK(e.estimate == doctest::Approx(2.0 / 2.0).epsilon(1e-8));
  CHECK(e.cost == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(e.coord == 0);
  CHECK(e.branch == 0);
}

TEST_CASE("fusion weights estimates by inverse cost") {
  std::vector<scalable::CoordinateEstimate> es(2);
  es[0].estimate = 1.0;
  es[0].cost = 0.5;
  es[1].estimate = 3.0;
  es[1].cost = 1.0;
  CHECK(scalable::fuse(es) == doctest::Approx((2.0 + 3.0) / 3.0));
  es.resize(1);
  CHECK(scalable::fuse(es) == 1.0);
  CHECK_THROWS_AS(scalable::fuse({}), std::invalid_argument);
}

TEST_CASE("reliability calibration hits the unconditional retention target") {
  ModelSpace m = burst_model();
  num::MonteCarloConfig mc;
  mc.samples = 20000;
  mc.seed = 31;
  mc.workers = 4;
  const auto det = scalable::calibrate_np_threshold(m, 0.1, mc);
  const double nu = 0.4;
  const auto test = scalable::calibrate_reliability(
      m, det, IsolationKind::MarginalLR, 0, 1, nu, mc);
  CHECK(test.rho >= nu);
  CHECK(test.threshold > 0.0);

  // replay fresh trials: P(correct branch and cost under threshold) ~ nu
  int retained = 0;
  const int N = 20000;
  for (int k = 0; k < N; ++k) {
    CounterRng rng(777, k);
    const int truth = 1;  // scenario 1 compromises coordinate 0
    auto [X, Y] = m.sample(truth, rng.next_u64());
    (void)X;
    int decided = 0;
    if (scalable::np_detect(m, Y, det))
      decided = m.compromised(scalable::isolate_lr(m, Y), 0) ? 1 : 0;
    if (decided == 1 &&
        test.retain(scalable::coordinate_estimate(m, 0, 1, Y).cost,
                    rng.uniform()))
      ++retained;
  }
  CHECK(static_cast<double>(retained) / N == doctest::Approx(nu).epsilon(0.05));
}

TEST_CASE("degenerate cost distributions retain every correct classification") {
  // conjugate gaussian branches have a data-independent posterior variance
  ModelSpace m = separated_model();
  num::MonteCarloConfig mc;
  mc.samples = 20000;
  mc.seed = 61;
  mc.workers = 4;
  const auto det = scalable::calibrate_np_threshold(m, 0.1, mc);
  const auto test = scalable::calibrate_reliability(
      m, det, IsolationKind::MarginalLR, 0, 0, 0.3, mc);
  CHECK(test.tie_prob == 1.0);
  CHECK(test.retain(test.threshold, 0.999));
}

TEST_CASE("reliability target above the classification rate is rejected") {
  // overlapping variance branches keep the classification rate well below 0.95
  ModelSpace m = variance_attack_model();
  num::MonteCarloConfig mc;
  mc.samples = 5000;
  mc.seed = 41;
  const auto det = scalable::calibrate_np_threshold(m, 0.1, mc);
  CHECK_THROWS_AS(scalable::calibrate_reliability(
                      m, det, IsolationKind::MarginalLR, 0, 1, 0.95, mc),
                  std::invalid_argument);
}

TEST_CASE("pipeline fuses per-coordinate estimates and counts work") {
  ModelSpace m = separated_model();
  num::MonteCarloConfig mc;
  mc.samples = 10000;
  mc.seed = 51;
  mc.workers = 4;
  scalable::PipelineCalibration calib;
  calib.detector = scalable::calibrate_np_threshold(m, 0.1, mc);
  calib.isolation = IsolationKind::MarginalLR;
  for (int l = 0; l < 2; ++l)
    for (int b = 0; b < 2; ++b)
      calib.tests.push_back(scalable::calibrate_reliability(
          m, calib.detector, calib.isolation, l, b, 0.3, mc));

  double se_attack_free = 0.0;
  int fused = 0, alarms = 0;
  for (int k = 0; k < 500; ++k) {
    auto [X, Y] = m.sample(0, 9000 + k);
    const auto res = scalable::scalable_pipeline(m, Y, calib, 400 + k);
    CHECK(res.coords.size() == 2);
    CHECK(res.evals > 0);
    if (res.attack_declared) ++alarms;
    // condition on no false alarm: the gaussian posterior variance is
    // data-independent here, so the reliability filter cannot screen out a
    // mislabeled branch, only the detector budget limits that path
    if (!res.attack_declared && !res.fallback) {
      const double d = X - res.estimate;
      se_attack_free += d * d;
      ++fused;
    }
  }
  CHECK(alarms < 100);  // roughly the alpha = 0.1 budget
  REQUIRE(fused > 100);
  // fused squared error should beat the prior variance by a wide margin
  CHECK(se_attack_free / fused < 0.7);
}

TEST_CASE("pipeline flags the fallback path when nothing is retained") {
  ModelSpace m = separated_model();
  scalable::PipelineCalibration calib;
  calib.detector.log_threshold = -1e9;  // always alarms
  calib.isolation = IsolationKind::MarginalLR;
  for (int l = 0; l < 2; ++l)
    for (int b = 0; b < 2; ++b)
      calib.tests.push_back(
          scalable::ReliabilityTest{l, b, -1.0, 0.0, 0.5, 0.3});  // rejects all
  auto [X, Y] = m.sample(0, 123);
  (void)X;
  const auto res = scalable::scalable_pipeline(m, Y, calib);
  CHECK(res.attack_declared);
  CHECK(res.fallback);
  for (const auto& c : res.coords) CHECK(!c.reliable);
}
