#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "secest/model.hpp"
#include "secest/optimal.hpp"
#include "secest/scalable.hpp"

namespace secest::cli {

struct BetaGrid {
  double lo = 0.05, hi = 0.6;
  int steps = 8;
};

struct ExperimentConfig {
  std::string out;  // CSV destination; empty writes to stdout
  std::uint64_t seed = 1;
  std::size_t samples = 0;  // 0 keeps the per-case default
  unsigned workers = 0;     // 0 = hardware concurrency
  double alpha = 0.1;
  BetaGrid beta_grid;
  std::string model_name = "case1";
  std::optional<nlohmann::json> model_json;
};

// Parses the JSON config file and overlays it on the defaults.
ExperimentConfig load_config(const std::string& path);
void apply_config_json(const nlohmann::json& j, ExperimentConfig& cfg);

model::ModelSpace model_from_json(const nlohmann::json& j);

// Built-in study models
model::ModelSpace case1_model();     // one vulnerable sensor, uniform burst
model::ModelSpace case2_model();     // both sensors vulnerable, heavier noise
model::ModelSpace exponent_model();  // variance-change attack, gain 1 and 4
model::ModelSpace table_model();     // equal gains, wide uniform burst
model::ModelSpace named_model(const ExperimentConfig& cfg);

// Simple CSV document: numeric rows plus trailing "# key=value" metadata.
struct CsvDoc {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::string> metadata;
};

void write_csv(const CsvDoc& doc, std::ostream& os);
void emit(const CsvDoc& doc, const ExperimentConfig& cfg);

// Trade-off curve beta -> q at fixed alpha for the given model.
CsvDoc region_study(const model::ModelSpace& m, const ExperimentConfig& cfg,
                    std::size_t cache_samples);

struct TableRow {
  double nu10, nu11, nu20, nu21;  // retention targets, sensor then branch
  double alpha, beta;
};

// Scalable-versus-optimal degradation comparison over the given settings.
CsvDoc table_study(const std::vector<TableRow>& rows,
                   const ExperimentConfig& cfg);
std::vector<TableRow> published_table_rows();

CsvDoc exponent_study(const model::ModelSpace& m, const ExperimentConfig& cfg,
                      const std::vector<int>& n_grid,
                      scalable::IsolationKind kind);

int run_case1(const ExperimentConfig& cfg);
int run_case2(const ExperimentConfig& cfg);
int run_case3(const ExperimentConfig& cfg);
int run_region(const ExperimentConfig& cfg);
int run_exponent(const ExperimentConfig& cfg);
int run_custom(const ExperimentConfig& cfg);

// 0 success, 2 bad configuration, 3 infeasible constraints, 4 numeric failure
int dispatch(const std::string& command, const ExperimentConfig& cfg);

}  // namespace secest::cli
