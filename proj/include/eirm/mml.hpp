#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "eirm/data.hpp"

namespace eirm {

// Nodes and weights for integrating against the standard normal density.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1

  // Equally spaced nodes on [lo, hi], weights proportional to the normal
  // density and normalized.
  static QuadratureRule rectangle(int n = 61, double lo = -6.0, double hi = 6.0);
};

enum class MmlVariant { rating_scale, free_threshold };

std::string_view to_string(MmlVariant v);
MmlVariant mml_variant_from_string(std::string_view name);

struct MmlOptions {
  int max_iterations = 500;
  double tolerance = 1e-5;  // on the largest absolute parameter change
  int threads = 1;
};

// Fixed-item graded response model, logit Pr(y <= k) = a_i (alpha_k - theta - b_i)
// with theta ~ N(0, 1). The rating-scale variant shares alpha across items and
// fixes mean(b) = 0; the free variant has per-item alpha and reports b_i as
// minus the mean of the item's cutpoints.
struct MmlEstimates {
  MmlVariant variant = MmlVariant::rating_scale;
  Eigen::VectorXd a;
  Eigen::VectorXd b;
  Eigen::MatrixXd thresholds;  // 1 x (K-1) or I x (K-1)
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_trace;  // marginal log-likelihood at the start of each iteration, then final
};

MmlEstimates fit_mml(const ResponseTable& table, const ItemDesign& design, MmlVariant variant,
                     const QuadratureRule& rule = QuadratureRule::rectangle(), const MmlOptions& options = {});

// Marginal log-likelihood of the fixed-item model at the given parameters.
// thresholds: one shared row, or one row per item; b is ignored when
// per-item rows are given.
double marginal_loglik(const ResponseTable& table, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const Eigen::MatrixXd& thresholds, const QuadratureRule& rule, int threads = 1);

// item_id,position,negative,a_hat,b_hat, ordered by position.
void write_point_estimates_csv(const MmlEstimates& est, const ItemDesign& design, const std::filesystem::path& path);
// Rating scale: one row `shared`; free: one row per item.
void write_thresholds_csv(const MmlEstimates& est, const ItemDesign& design, const std::filesystem::path& path);
// iteration,loglik
void write_loglik_trace_csv(const MmlEstimates& est, const std::filesystem::path& path);

}  // namespace eirm
