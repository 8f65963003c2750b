#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "eirm/data.hpp"
#include "eirm/kernel.hpp"
#include "eirm/model_spec.hpp"
#include "eirm/sampler.hpp"

namespace eirm {

// Generative settings for one synthetic survey.
//   gamma: log-discrimination coefficients in the order intercept, negative,
//          centred position, negative x centred position (any prefix).
//   beta:  location coefficients. Graded families: [negative]. Dichotomous
//          families: [intercept, negative] (any prefix).
struct SimConfig {
  int n_persons = 1000;
  int n_items = 40;
  int n_categories = 4;
  double fraction_negative = 0.4;
  Family family = Family::grm_rating_scale;
  std::vector<double> alpha{-2.2, -0.7, 0.9};
  std::vector<double> beta{1.4};
  std::vector<double> gamma{0.6, -0.4};
  double sigma_b = 0.7;
  double sigma_a = 0.2;
  double rho = 0.2;
  std::uint64_t seed = 1;
  bool rd_layout = true;  // negative items occupy the final block of positions
  int response_min = 1;
  // Raw files store negative items as if worded negatively, so reverse
  // coding at ingest recovers the generated categories.
  bool reverse_worded = true;

  void validate() const;
  static SimConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  SurveyConfig survey() const;
};

struct SimOutput {
  ResponseTable raw;      // as ingest would produce from the written files
  ResponseTable model;    // categories 1..K after reverse coding
  ItemDesign design;
  Eigen::VectorXd theta;
  Eigen::VectorXd zeta0, zeta1;
  Eigen::VectorXd a, b;
  Eigen::MatrixXd thresholds;  // 1 x (K-1), or I x (K-1) for free thresholds
};

SimOutput simulate(const SimConfig& config);

// Writes responses.csv, items.csv, survey.json and truth.json.
void write_simulation(const SimConfig& config, const SimOutput& sim, const std::filesystem::path& dir);

// Seed of replicate r, keyed so replicates can be generated in any order.
std::uint64_t replicate_seed(std::uint64_t seed, int replicate);

struct RecoveryRow {
  std::string parameter;
  double truth = 0.0;
  std::vector<double> estimate;  // posterior mean per replicate
  std::vector<double> lower, upper;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
};

struct RecoveryReport {
  int replicates = 0;
  std::vector<RecoveryRow> rows;
  std::vector<int> divergences;  // per replicate
  const RecoveryRow* find(std::string_view parameter) const;
};

// simulate -> explanatory fit -> summary, over R replicates. The fitted
// model uses the covariates implied by the config's beta and gamma lengths.
RecoveryReport recovery_study(const SimConfig& config, const SamplerConfig& sampler, int replicates,
                              int threads = 1,
                              Parameterization parameterization = Parameterization::noncentered);

void write_recovery_csv(const RecoveryReport& report, const std::filesystem::path& path);

}  // namespace eirm
