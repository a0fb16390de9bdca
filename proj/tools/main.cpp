#include <CLI11.hpp>

#include "experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"secure Bayesian parameter estimation under causative attacks"};
  app.require_subcommand(1);

  std::string config_path, out, beta_spec, model_name;
  std::uint64_t seed = 0;
  long long samples = -1;
  int workers = -1;
  double alpha = -1.0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "RNG seed")->each([&](const std::string&) {
      seed_set = true;
    });
    sub->add_option("--samples", samples, "Monte Carlo sample count");
    sub->add_option("--workers", workers, "thread count (default: all cores)");
    sub->add_option("--out", out, "CSV output path (default: stdout)");
    sub->add_option("--alpha", alpha, "false-alarm bound");
    sub->add_option("--beta-grid", beta_spec, "miss bound sweep as lo:hi:steps");
    sub->add_option("--model", model_name,
                    "model: case1|case2|exponent|table|custom");
  };

  const char* commands[] = {"case1", "case2", "case3", "region", "exponent",
                            "custom"};
  const char* descs[] = {
      "trade-off curve, one vulnerable sensor",
      "trade-off curves, both sensors vulnerable",
      "scalable versus optimal degradation comparison",
      "trade-off curve for a chosen model",
      "isolation error decay versus sample count",
      "config-driven study"};
  for (int i = 0; i < 6; ++i) add_common(app.add_subcommand(commands[i], descs[i]));

  CLI11_PARSE(app, argc, argv);

  secest::cli::ExperimentConfig cfg;
  if (!config_path.empty()) {
    try {
      cfg = secest::cli::load_config(config_path);
    } catch (const std::exception& e) {
      std::cerr << e.what() << "\n";
      return 2;
    }
  }
  if (seed_set) cfg.seed = seed;
  if (samples >= 0) cfg.samples = static_cast<std::size_t>(samples);
  if (workers >= 0) cfg.workers = static_cast<unsigned>(workers);
  if (!out.empty()) cfg.out = out;
  if (alpha >= 0.0) cfg.alpha = alpha;
  if (!model_name.empty()) cfg.model_name = model_name;
  if (!beta_spec.empty()) {
    double lo, hi;
    int steps;
    if (std::sscanf(beta_spec.c_str(), "%lf:%lf:%d", &lo, &hi, &steps) != 3) {
      std::cerr << "bad --beta-grid, expected lo:hi:steps\n";
      return 2;
    }
    cfg.beta_grid = {lo, hi, steps};
  }

  return secest::cli::dispatch(app.get_subcommands().front()->get_name(), cfg);
}
