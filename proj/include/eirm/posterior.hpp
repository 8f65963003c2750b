#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eirm/data.hpp"
#include "eirm/density.hpp"
#include "eirm/model_spec.hpp"

namespace eirm {

// Offsets of each parameter block inside the unconstrained vector; -1 marks
// a block the family does not have. The constrained vector uses the same
// layout with standardized deviates replaced by the residuals they imply.
struct ParameterLayout {
  Eigen::Index thresholds = -1, n_thresholds = 0;  // (K-1) or I*(K-1), item-major
  Eigen::Index beta = -1, n_beta = 0;
  Eigen::Index gamma = -1, n_gamma = 0;
  Eigen::Index zeta0 = -1;  // unconstrained: standardized deviates e0
  Eigen::Index zeta1 = -1;  // unconstrained: standardized deviates e1
  Eigen::Index theta = -1;
  Eigen::Index log_sigma_b = -1;
  Eigen::Index log_sigma_a = -1;
  Eigen::Index atanh_rho = -1;
  Eigen::Index n_items = 0, n_persons = 0;
  Eigen::Index dimension = 0;
};

// One point in parameter space, in model coordinates.
struct ParameterState {
  Eigen::MatrixXd thresholds;  // 1 x (K-1) shared, I x (K-1) per item, or empty
  Eigen::VectorXd beta;
  Eigen::VectorXd gamma;
  Eigen::VectorXd zeta0;
  Eigen::VectorXd zeta1;
  Eigen::VectorXd theta;
  double sigma_b = 0.0;
  double sigma_a = 0.0;
  double rho = 0.0;
};

// Joint log posterior of an explanatory item response model over an
// unconstrained space:
//   thresholds   alpha_1 plus log increments
//   beta, gamma  as is
//   zeta0, zeta1 non-centered: (zeta0, zeta1) = L (e0, e1), L the Cholesky
//                factor of [[sigma_b^2, s_ab], [s_ab, sigma_a^2]]; when the
//                spec asks for the centered form these blocks hold b and
//                ln a instead (rating scale: mean(b) and Helmert contrasts),
//                and rating-scale cutpoints sit relative to mean(b)
//   theta        standard normal (sigma_theta fixed at 1)
//   sigma_b, sigma_a via log; rho_ab via atanh.
// Immutable after construction; evaluation is re-entrant.
class Posterior final : public LogDensityModel {
 public:
  Posterior(const ModelSpec& spec, const ResponseTable& table, const ItemDesign& design,
            int threads = 1);

  Eigen::Index dimension() const override { return layout_.dimension; }
  double log_density_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override;
  Eigen::VectorXd constrain(const Eigen::VectorXd& z) const override;
  std::vector<std::string> parameter_names() const override { return names_; }
  std::vector<ParameterBlock> blocks() const override { return blocks_; }

  // Checked entry points: throw ValidationError on non-finite or mis-sized z.
  double log_density(const Eigen::VectorXd& z) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& z) const;

  ParameterState state(const Eigen::VectorXd& z) const;
  Eigen::VectorXd unconstrain(const ParameterState& state) const;
  Eigen::VectorXd flatten(const ParameterState& state) const;

  const ParameterLayout& layout() const { return layout_; }
  const ModelSpec& spec() const { return spec_; }
  // Coefficient term per parameter name ("negative", "intercept", ...), or "".
  const std::vector<std::string>& terms() const { return terms_; }
  // Design matrices (intercept column included where the family has one).
  const Eigen::MatrixXd& location_design() const { return x_location_; }
  const Eigen::MatrixXd& disc_design() const { return x_disc_; }
  int n_categories() const { return n_categories_; }

 private:
  double evaluate(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const;
  Eigen::VectorXd location_from(const Eigen::VectorXd& z) const;  // centered b
  double centered_prior(const Eigen::VectorXd& z, const Eigen::VectorXd& zeta0, const Eigen::VectorXd& zeta1,
                        double sigma_b, double sigma_a, double w, const Eigen::VectorXd& s0,
                        const Eigen::VectorXd& s1, Eigen::VectorXd* grad) const;

  ModelSpec spec_;
  ParameterLayout layout_;
  int n_categories_ = 2;
  int threads_ = 1;
  Eigen::MatrixXd x_location_;
  Eigen::MatrixXd x_disc_;
  Eigen::MatrixXd contrast_;  // centered rating scale only
  // Cells grouped by person.
  std::vector<std::int32_t> cell_item_;
  std::vector<std::int32_t> cell_category_;
  std::vector<std::size_t> person_start_;
  std::vector<std::size_t> block_start_;  // person index boundaries of reduction blocks
  std::vector<std::string> names_;
  std::vector<std::string> terms_;
  std::vector<ParameterBlock> blocks_;
};

Posterior build_posterior(const ModelSpec& spec, const ResponseTable& table,
                          const ItemDesign& design, int threads = 1);

}  // namespace eirm
