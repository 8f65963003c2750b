#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "eirm/data.hpp"

namespace eirm {

// Regression-discontinuity covariates on item position. The boundary sits
// midway between the last positive and the first negative item.
struct RdDesign {
  double boundary = 0.0;
  std::vector<double> negative;
  std::vector<double> centered_position;
  std::vector<double> interaction;  // negative x centered_position

  // Columns [1, negative, centered_position, interaction].
  Eigen::MatrixXd matrix() const;
};

inline constexpr std::string_view kCenteredPosition = "position_c";
inline constexpr std::string_view kNegativeByPosition = "negative_x_position_c";

// Requires items sorted by position with one switch from positive to
// negative framing.
RdDesign build_rd_design(const ItemDesign& design);

// Adds the centred position and interaction as item covariates.
void add_rd_covariates(ItemDesign& design);

struct OlsFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  double residual_variance = 0.0;
  int n = 0;

  Eigen::MatrixXd covariance;  // residual_variance * (X'X)^-1
};

OlsFit ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x);

struct PermutationResult {
  double observed = 0.0;
  std::vector<double> statistics;
  double p_value = 1.0;
  int b = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// Framing coefficient of the RD regression of log discriminations, and its
// permutation distribution under random reassignment to positions.
double rd_framing_coefficient(const Eigen::VectorXd& log_a, const Eigen::MatrixXd& rd_matrix);
PermutationResult randomization_test(const Eigen::VectorXd& log_a_hat, const ItemDesign& design, int b,
                                     std::uint64_t seed, int threads = 1);

struct CarelessResult {
  ResponseTable kept;
  ItemDesign design;
  std::vector<std::string> excluded_person_ids;
  std::vector<double> person_sd;  // per person of the input table
  double threshold = 0.0;
};

// Drops persons whose response SD is at or below the `quantile` point of the
// person-SD distribution. Use raw (pre-reverse-coding) responses.
CarelessResult careless_filter(const ResponseTable& raw, const ItemDesign& design, double quantile = 0.15);

struct Readability {
  int words = 0;
  int sentences = 0;
  int syllables = 0;
  double grade = 0.0;
};

int count_syllables(std::string_view word);
Readability readability(std::string_view text);
double flesch_kincaid(std::string_view text);

struct EffectSize {
  double percent_change = 0.0;  // exp(gamma1) - 1
  double standardized = 0.0;    // gamma1 / sigma_a
};

EffectSize effect_transforms(double gamma1, double sigma_a);

// Plot-ready tables.
struct ItemEstimate {
  std::string item_id;
  int position = 0;
  bool negative = false;
  double value = 0.0;
};

// item_id,framing,a_hat
void write_boxplot_csv(const std::vector<ItemEstimate>& a_hat, const std::filesystem::path& path);
// position,item_id,framing,a_hat,fitted,lower95,upper95; the fit is a
// separate straight line per framing group.
void write_scatter_csv(const std::vector<ItemEstimate>& a_hat, const std::filesystem::path& path);

struct ItemInterval {
  std::string item_id;
  int position = 0;
  bool negative = false;
  double median = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

// item_id,position,framing,median,lower95,upper95, sorted by position.
void write_interval_csv(std::vector<ItemInterval> rows, const std::filesystem::path& path);

std::string_view framing_label(bool negative);

}  // namespace eirm
