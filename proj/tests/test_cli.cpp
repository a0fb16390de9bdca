#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "experiments.hpp"

using namespace secest;
using cli::ExperimentConfig;

TEST_CASE("model json round trip builds a valid space") {
  const auto j = nlohmann::json::parse(R"({
    "m": 2, "n": 3, "K": 1, "eps0": 0.2,
    "scenarios": [{"coords": [0], "prior": 0.3}, {"coords": [1], "prior": 0.5}],
    "prior": {"kind": "uniform", "lo": -2, "hi": 2},
    "attack_free": [
      {"kind": "gaussian_mean_shift", "h": 1, "var": 1},
      {"kind": "gaussian_mean_shift", "h": 2, "var": 1}],
    "compromised": [
      {"kind": "gaussian_mean_shift", "h": 1, "var": 5},
      {"kind": "gaussian_convolved_uniform", "h": 2, "var": 1,
       "lo": -4, "hi": 4}]
  })");
  const auto m = cli::model_from_json(j);
  CHECK(m.m() == 2);
  CHECK(m.n() == 3);
  CHECK(m.T() == 2);
  CHECK(m.eps0() == 0.2);
  CHECK(m.marginal(1, 1).kind() ==
        model::DensityFamily::Kind::GaussianConvolvedUniform);
}

TEST_CASE("malformed model json is reported as a configuration error") {
  CHECK_THROWS_AS(cli::model_from_json(nlohmann::json::parse("{}")),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      cli::model_from_json(nlohmann::json::parse(
          R"({"m":1,"eps0":0.5,"prior":{"kind":"nope"},
              "attack_free":[],"compromised":[]})")),
      std::invalid_argument);
}

TEST_CASE("config json overlays defaults") {
  ExperimentConfig cfg;
  cli::apply_config_json(nlohmann::json::parse(R"({
    "seed": 99, "samples": 1234, "alpha": 0.25,
    "beta_grid": {"lo": 0.1, "hi": 0.4, "steps": 4},
    "out": "x.csv"
  })"),
                         cfg);
  CHECK(cfg.seed == 99);
  CHECK(cfg.samples == 1234);
  CHECK(cfg.alpha == 0.25);
  CHECK(cfg.beta_grid.steps == 4);
  CHECK(cfg.out == "x.csv");
}

TEST_CASE("missing config file exits with a configuration error") {
  CHECK_THROWS_AS(cli::load_config("/nonexistent/config.json"),
                  std::invalid_argument);
  CHECK(cli::dispatch("nope", ExperimentConfig{}) == 2);
}

TEST_CASE("csv output carries full precision, LF endings, and metadata") {
  cli::CsvDoc doc;
  doc.columns = {"a", "b"};
  doc.rows.push_back({1.0 / 3.0, 2.0});
  doc.metadata["seed"] = "7";
  std::ostringstream os;
  cli::write_csv(doc, os);
  const std::string s = os.str();
  CHECK(s.find("a,b\n") == 0);
  CHECK(s.find("0.33333333333333331") != std::string::npos);
  CHECK(s.find("# seed=7\n") != std::string::npos);
  CHECK(s.find('\r') == std::string::npos);
}

TEST_CASE("built-in models are well formed") {
  CHECK(cli::case1_model().T() == 1);
  CHECK(cli::case2_model().T() == 2);
  CHECK(cli::exponent_model().eps0() == 0.0);
  CHECK(cli::table_model().prior().kind() ==
        model::ParameterPrior::Kind::Gaussian);
  CHECK(cli::published_table_rows().size() == 6);
}

TEST_CASE("region study emits one row per beta and respects the budget") {
  ExperimentConfig cfg;
  cfg.samples = 300;
  cfg.seed = 5;
  cfg.alpha = 0.1;
  cfg.beta_grid = {0.1, 0.4, 3};
  const auto doc = cli::region_study(cli::case1_model(), cfg, 300);
  REQUIRE(doc.rows.size() == 3);
  for (const auto& r : doc.rows) {
    CHECK(r[0] == 0.1);                     // alpha column
    if (r[2] == 1.0) CHECK(r[5] <= 0.1 + 1e-9);  // realized p_fa
  }
  CHECK(doc.metadata.count("j0") == 1);
  // betas ascend, so the achieved cost level cannot rise
  if (doc.rows[0][2] == 1.0 && doc.rows[2][2] == 1.0)
    CHECK(doc.rows[2][3] <= doc.rows[0][3] + 1e-9);
}

TEST_CASE("dispatch writes a parseable csv file") {
  ExperimentConfig cfg;
  cfg.samples = 300;
  cfg.seed = 5;
  cfg.beta_grid = {0.2, 0.4, 2};
  cfg.out = "/tmp/secest_test_region.csv";
  CHECK(cli::dispatch("case1", cfg) == 0);
  std::ifstream in(cfg.out);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "alpha,beta,feasible,u_star,q,p_fa,p_md,beta_floor");
  int datarows = 0, metarows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#')
      ++metarows;
    else if (!line.empty())
      ++datarows;
  }
  CHECK(datarows == 2);
  CHECK(metarows >= 1);
  std::remove(cfg.out.c_str());
}

TEST_CASE("custom run without a model is a configuration error") {
  CHECK(cli::dispatch("custom", ExperimentConfig{}) == 2);
}
