#pragma once

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "eirm/data.hpp"

// Response-model kernels.
//
// Sign conventions (they differ across IRT software):
//   graded response:  logit Pr(y <= k) = a * (alpha_k - (theta + b))
//                     so larger theta + b pushes responses to higher categories;
//   dichotomous:      logit Pr(y = 1)  = a * (theta + b), b acting as easiness.
// Categories are 1..K with Pr(y <= 0) = 0 and Pr(y <= K) = 1. A dichotomous
// response y in {0, 1} is category y + 1, and equals the K = 2 graded model with
// alpha_1 = 0.
namespace eirm {

enum class Family { grm_rating_scale, grm_free_threshold, two_pl, one_pl };

std::string_view to_string(Family family);
Family family_from_string(std::string_view name);

inline bool is_graded(Family f) {
  return f == Family::grm_rating_scale || f == Family::grm_free_threshold;
}

namespace kernel {

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(logistic(x)) without overflow or cancellation.
inline double log_logistic(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

// Log-probability of category k (1..K) and its partial derivatives with
// respect to the upper predictor u = a(alpha_k - t) and lower predictor
// l = a(alpha_{k-1} - t). Interior categories use
//   F(u) - F(l) = F(u) (1 - F(l)) (1 - exp(l - u)),
// so the log stays finite and accurate far into both tails.
struct CategoryTerm {
  double log_prob;
  double d_upper;
  double d_lower;
};

inline CategoryTerm category_term(int k, int n_categories, double upper, double lower) {
  if (k == 1) return {log_logistic(upper), logistic(-upper), 0.0};
  if (k == n_categories) return {log_logistic(-lower), 0.0, -logistic(lower)};
  const double gap = upper - lower;
  const double inv_em1 = 1.0 / std::expm1(gap);
  return {log_logistic(upper) + log_logistic(-lower) + std::log(-std::expm1(-gap)),
          logistic(-upper) + inv_em1, -logistic(lower) - inv_em1};
}

// Pr(y <= k) = logistic(a (alpha_k - (theta + b))).
double grm_cum_prob(double a, double alpha_k, double theta, double b);

// Category probabilities P(1..K) for one item given its K - 1 thresholds.
std::vector<double> grm_category_probs(double a, std::span<const double> thresholds, double theta,
                                       double b);

// Pr(y = 1) = logistic(a (theta + b)); a = 1 gives the one-parameter model.
double dichotomous_prob(double a, double theta, double b);

// a_i = exp(gamma . x_i + zeta_1i).
double log_disc_predictor(std::span<const double> gamma, std::span<const double> covariates,
                          double zeta);

}  // namespace kernel

// Ordered cutpoints: one shared row (rating scale) or one row per item.
class ThresholdSet {
 public:
  ThresholdSet() = default;
  explicit ThresholdSet(Eigen::MatrixXd values);
  static ThresholdSet shared(std::span<const double> alpha);

  bool is_shared() const { return values_.rows() == 1; }
  Eigen::Index n_cutpoints() const { return values_.cols(); }
  int n_categories() const { return static_cast<int>(values_.cols()) + 1; }
  Eigen::Index rows() const { return values_.rows(); }
  const Eigen::MatrixXd& values() const { return values_; }
  std::span<const double> row_for(std::size_t item) const;

 private:
  Eigen::MatrixXd values_;
  // Row-major copy so each item's cutpoints are contiguous.
  std::vector<double> flat_;
};

// Full per-item and per-person parameter set for the conditional likelihood.
struct ModelParams {
  Family family = Family::grm_rating_scale;
  Eigen::VectorXd a;      // per item, > 0
  Eigen::VectorXd b;      // per item
  Eigen::VectorXd theta;  // per person
  ThresholdSet thresholds;  // unused for dichotomous families
};

// Sum of log response probabilities over observed cells. Per-person sums are
// accumulated in record order, then reduced pairwise over persons, so the
// result does not depend on `threads`.
double conditional_loglik(const ResponseTable& table, const ModelParams& params, int threads = 1);

}  // namespace eirm
