#include "eirm/kernel.hpp"

#include <fmt/format.h>

#include "eirm/error.hpp"
#include "eirm/parallel.hpp"

namespace eirm {

std::string_view to_string(Family family) {
  switch (family) {
    case Family::grm_rating_scale: return "grm_rating_scale";
    case Family::grm_free_threshold: return "grm_free_threshold";
    case Family::two_pl: return "two_pl";
    case Family::one_pl: return "one_pl";
  }
  return "unknown";
}

Family family_from_string(std::string_view name) {
  if (name == "grm_rating_scale") return Family::grm_rating_scale;
  if (name == "grm_free_threshold") return Family::grm_free_threshold;
  if (name == "two_pl") return Family::two_pl;
  if (name == "one_pl") return Family::one_pl;
  throw ValidationError(fmt::format("unknown model family '{}'", name));
}

namespace kernel {

namespace {

void require_finite(std::initializer_list<double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError(fmt::format("{}: non-finite input", what));
  }
}

void require_positive_disc(double a, const char* what) {
  if (!(a > 0)) throw ValidationError(fmt::format("{}: discrimination must be > 0", what));
}

}  // namespace

double grm_cum_prob(double a, double alpha_k, double theta, double b) {
  require_finite({a, alpha_k, theta, b}, "grm_cum_prob");
  require_positive_disc(a, "grm_cum_prob");
  return logistic(a * (alpha_k - (theta + b)));
}

std::vector<double> grm_category_probs(double a, std::span<const double> thresholds, double theta,
                                       double b) {
  require_finite({a, theta, b}, "grm_category_probs");
  require_positive_disc(a, "grm_category_probs");
  if (thresholds.empty()) throw ValidationError("grm_category_probs: need at least one threshold");
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    if (!std::isfinite(thresholds[k])) throw ValidationError("grm_category_probs: non-finite threshold");
    if (k > 0 && !(thresholds[k] > thresholds[k - 1])) {
      throw ValidationError("grm_category_probs: thresholds must be strictly increasing");
    }
  }
  const int n_cat = static_cast<int>(thresholds.size()) + 1;
  const double t = theta + b;
  std::vector<double> probs(n_cat);
  for (int k = 1; k <= n_cat; ++k) {
    const double upper = k < n_cat ? a * (thresholds[k - 1] - t) : 0.0;
    const double lower = k > 1 ? a * (thresholds[k - 2] - t) : 0.0;
    probs[k - 1] = std::exp(category_term(k, n_cat, upper, lower).log_prob);
  }
  return probs;
}

double dichotomous_prob(double a, double theta, double b) {
  require_finite({a, theta, b}, "dichotomous_prob");
  require_positive_disc(a, "dichotomous_prob");
  return logistic(a * (theta + b));
}

double log_disc_predictor(std::span<const double> gamma, std::span<const double> covariates,
                          double zeta) {
  if (gamma.size() != covariates.size()) {
    throw ValidationError("log_disc_predictor: coefficient and covariate lengths differ");
  }
  double eta = zeta;
  for (std::size_t i = 0; i < gamma.size(); ++i) eta += gamma[i] * covariates[i];
  return std::exp(eta);
}

}  // namespace kernel

ThresholdSet::ThresholdSet(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw ValidationError("ThresholdSet: need at least one cutpoint");
  }
  for (Eigen::Index r = 0; r < values_.rows(); ++r) {
    for (Eigen::Index c = 0; c < values_.cols(); ++c) {
      if (!std::isfinite(values_(r, c))) throw ValidationError("ThresholdSet: non-finite cutpoint");
      if (c > 0 && !(values_(r, c) > values_(r, c - 1))) {
        throw ValidationError(
            fmt::format("ThresholdSet: cutpoints in row {} are not strictly increasing", r));
      }
    }
  }
  flat_.resize(static_cast<std::size_t>(values_.size()));
  for (Eigen::Index r = 0; r < values_.rows(); ++r) {
    for (Eigen::Index c = 0; c < values_.cols(); ++c) {
      flat_[static_cast<std::size_t>(r * values_.cols() + c)] = values_(r, c);
    }
  }
}

ThresholdSet ThresholdSet::shared(std::span<const double> alpha) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(alpha.size()));
  for (std::size_t k = 0; k < alpha.size(); ++k) m(0, static_cast<Eigen::Index>(k)) = alpha[k];
  return ThresholdSet(std::move(m));
}

std::span<const double> ThresholdSet::row_for(std::size_t item) const {
  const std::size_t r = is_shared() ? 0 : item;
  const auto width = static_cast<std::size_t>(values_.cols());
  return std::span<const double>(flat_).subspan(r * width, width);
}

double conditional_loglik(const ResponseTable& table, const ModelParams& params, int threads) {
  const auto n_items = static_cast<Eigen::Index>(table.n_items());
  const auto n_persons = static_cast<Eigen::Index>(table.n_persons());
  if (params.a.size() != n_items || params.b.size() != n_items || params.theta.size() != n_persons) {
    throw ValidationError(fmt::format(
        "conditional_loglik: parameter dimensions (a={}, b={}, theta={}) do not match table "
        "({} items, {} persons)",
        params.a.size(), params.b.size(), params.theta.size(), n_items, n_persons));
  }
  if (table.records.empty()) return 0.0;

  const bool graded = is_graded(params.family);
  int n_cat = 2;
  if (graded) {
    n_cat = params.thresholds.n_categories();
    if (!params.thresholds.is_shared() && params.thresholds.rows() != n_items) {
      throw ValidationError("conditional_loglik: per-item threshold rows do not match item count");
    }
  }

  // Group records by person, keeping file order within each person.
  std::vector<std::size_t> start(table.n_persons() + 1, 0);
  for (const auto& rec : table.records) ++start[static_cast<std::size_t>(rec.person) + 1];
  for (std::size_t p = 0; p < table.n_persons(); ++p) start[p + 1] += start[p];
  std::vector<std::size_t> order(table.records.size());
  {
    std::vector<std::size_t> fill(start.begin(), start.end() - 1);
    for (std::size_t r = 0; r < table.records.size(); ++r) {
      order[fill[static_cast<std::size_t>(table.records[r].person)]++] = r;
    }
  }

  std::vector<double> per_person(table.n_persons(), 0.0);
  parallel_for(table.n_persons(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      double sum = 0.0;
      for (std::size_t s = start[p]; s < start[p + 1]; ++s) {
        const auto& rec = table.records[order[s]];
        if (rec.value < 1 || rec.value > n_cat) {
          throw ValidationError(fmt::format("conditional_loglik: category {} outside 1..{}",
                                            rec.value, n_cat));
        }
        const double a = params.a[rec.item];
        const double t = params.theta[rec.person] + params.b[rec.item];
        double upper = 0.0, lower = 0.0;
        if (graded) {
          auto alpha = params.thresholds.row_for(static_cast<std::size_t>(rec.item));
          if (rec.value < n_cat) upper = a * (alpha[rec.value - 1] - t);
          if (rec.value > 1) lower = a * (alpha[rec.value - 2] - t);
        } else {
          upper = lower = -a * t;
        }
        sum += kernel::category_term(rec.value, n_cat, upper, lower).log_prob;
      }
      per_person[p] = sum;
    }
  });
  return pairwise_sum(per_person);
}

}  // namespace eirm
