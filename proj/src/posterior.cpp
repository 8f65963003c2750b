#include "eirm/posterior.hpp"

#include <cmath>
#include <numbers>
#include <type_traits>

#include <fmt/format.h>

#include "eirm/error.hpp"
#include "eirm/parallel.hpp"
#include "eirm/transforms.hpp"

namespace eirm {

std::vector<std::string> LogDensityModel::parameter_names() const {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < dimension(); ++i) names.push_back(fmt::format("x[{}]", i));
  return names;
}

namespace {

constexpr std::size_t kPersonsPerBlock = 64;
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double normal_lpdf(double x, double scale) {
  const double r = x / scale;
  return -kLogSqrt2Pi - std::log(scale) - 0.5 * r * r;
}

double half_normal_lpdf(double x, double scale) { return std::log(2.0) + normal_lpdf(x, scale); }

double student_t_lpdf(double x, double df, double loc, double scale) {
  const double r = (x - loc) / scale;
  return std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
         0.5 * std::log(df * std::numbers::pi) - std::log(scale) -
         0.5 * (df + 1.0) * std::log1p(r * r / df);
}

double student_t_dlpdf(double x, double df, double loc, double scale) {
  const double d = x - loc;
  return -(df + 1.0) * d / (df * scale * scale + d * d);
}

// Elementwise log F(x) and F(-x) for the logistic F, from one exponential.
void log_logistic_pair(const Eigen::ArrayXd& x, Eigen::ArrayXd& e, Eigen::ArrayXd& log_f,
                       Eigen::ArrayXd& f_neg) {
  // The vectorized exp returns subnormals far below its range; flush them.
  e = (x.abs() < 708.0).select((-x.abs()).exp(), 0.0);
  log_f = x.min(0.0) - (1.0 + e).log();
  f_neg = (x >= 0.0).select(e, 1.0) / (1.0 + e);
}

// Stand-in for an absent cumulative bound. Its log-logistic term and
// derivative are exactly zero, so every cell is handled without branches.
constexpr double kAbsent = 1e300;

struct CategoryCache {
  double upper;    // a * alpha_k      (k < K)
  double lower;    // a * alpha_{k-1}  (k > 1)
  double log_gap;  // log(1 - exp(-(upper - lower)))
  double inv_gap;  // 1 / expm1(upper - lower)
};

}  // namespace

Posterior::Posterior(const ModelSpec& spec, const ResponseTable& table, const ItemDesign& design,
                     int threads)
    : spec_(spec), threads_(std::max(threads, 1)) {
  spec_.validate();
  if (spec_.n_categories != 0 && spec_.n_categories != design.n_categories) {
    throw ValidationError(fmt::format("model declares K = {} but the item design has K = {}",
                                      spec_.n_categories, design.n_categories));
  }
  n_categories_ = design.n_categories;
  if (!is_graded(spec_.family) && n_categories_ != 2) {
    throw ValidationError(fmt::format("{} requires dichotomous data (K = 2), design has K = {}",
                                      to_string(spec_.family), n_categories_));
  }
  if (n_categories_ < 2) throw ValidationError("need at least two response categories");
  if (design.size() != table.n_items()) {
    throw ValidationError(fmt::format("item design has {} items but the table indexes {}",
                                      design.size(), table.n_items()));
  }
  for (std::size_t i = 0; i < design.size(); ++i) {
    if (design.items[i].id != table.item_ids[i]) {
      throw ValidationError(fmt::format("item design order does not match table at index {} ('{}' vs '{}')",
                                        i, design.items[i].id, table.item_ids[i]));
    }
  }
  if (!table.category_scale) {
    throw ValidationError("response table holds raw values; convert with prepare_for_model first");
  }
  for (const auto& rec : table.records) {
    if (rec.value < 1 || rec.value > n_categories_) {
      throw ValidationError(fmt::format("response category {} outside 1..{}; convert with to_categories",
                                        rec.value, n_categories_));
    }
  }

  const auto n_items = static_cast<Eigen::Index>(table.n_items());
  const auto n_persons = static_cast<Eigen::Index>(table.n_persons());

  auto build_design = [&](const std::vector<std::string>& covariates, bool intercept) {
    const Eigen::Index cols = static_cast<Eigen::Index>(covariates.size()) + (intercept ? 1 : 0);
    Eigen::MatrixXd x(n_items, cols);
    Eigen::Index c = 0;
    if (intercept) x.col(c++).setOnes();
    for (const auto& name : covariates) {
      auto col = design.covariate(name);
      for (Eigen::Index i = 0; i < n_items; ++i) x(i, c) = col[static_cast<std::size_t>(i)];
      ++c;
    }
    return x;
  };

  const Family fam = spec_.family;
  const int n_cut = n_categories_ - 1;
  Eigen::Index offset = 0;
  auto take = [&](Eigen::Index n) {
    Eigen::Index at = offset;
    offset += n;
    return at;
  };
  if (is_graded(fam)) {
    layout_.n_thresholds = fam == Family::grm_rating_scale ? n_cut : n_items * n_cut;
    layout_.thresholds = take(layout_.n_thresholds);
  }
  if (spec_.has_location_effects()) {
    x_location_ = build_design(spec_.location_covariates, spec_.has_location_intercept());
    layout_.n_beta = x_location_.cols();
    layout_.beta = take(layout_.n_beta);
  }
  if (spec_.has_disc_effects()) {
    x_disc_ = build_design(spec_.disc_covariates, true);
    layout_.n_gamma = x_disc_.cols();
    layout_.gamma = take(layout_.n_gamma);
  }
  if (spec_.has_location_effects()) layout_.zeta0 = take(n_items);
  if (spec_.has_disc_effects()) layout_.zeta1 = take(n_items);
  layout_.theta = take(n_persons);
  if (spec_.has_location_effects()) layout_.log_sigma_b = take(1);
  if (spec_.has_disc_effects()) layout_.log_sigma_a = take(1);
  if (spec_.has_location_effects() && spec_.has_disc_effects()) layout_.atanh_rho = take(1);
  layout_.n_items = n_items;
  layout_.n_persons = n_persons;
  layout_.dimension = offset;

  // Names and blocks.
  names_.assign(static_cast<std::size_t>(offset), "");
  terms_.assign(static_cast<std::size_t>(offset), "");
  auto name_at = [&](Eigen::Index at, std::string name, std::string term = "") {
    names_[static_cast<std::size_t>(at)] = std::move(name);
    terms_[static_cast<std::size_t>(at)] = std::move(term);
  };
  if (layout_.thresholds >= 0) {
    if (fam == Family::grm_rating_scale) {
      for (int k = 0; k < n_cut; ++k) name_at(layout_.thresholds + k, fmt::format("alpha[<={}]", k + 1));
    } else {
      for (Eigen::Index i = 0; i < n_items; ++i) {
        for (int k = 0; k < n_cut; ++k) {
          name_at(layout_.thresholds + i * n_cut + k,
                  fmt::format("alpha[{}][<={}]", table.item_ids[static_cast<std::size_t>(i)], k + 1));
        }
      }
    }
    blocks_.push_back({"alpha", layout_.thresholds, layout_.n_thresholds});
  }
  if (layout_.beta >= 0) {
    Eigen::Index c = 0;
    if (spec_.has_location_intercept()) {
      name_at(layout_.beta, "beta0", "intercept");
      ++c;
    }
    for (std::size_t p = 0; p < spec_.location_covariates.size(); ++p, ++c) {
      name_at(layout_.beta + c, fmt::format("beta{}", p + 1), spec_.location_covariates[p]);
    }
    blocks_.push_back({"beta", layout_.beta, layout_.n_beta});
  }
  if (layout_.gamma >= 0) {
    name_at(layout_.gamma, "gamma0", "intercept");
    for (std::size_t p = 0; p < spec_.disc_covariates.size(); ++p) {
      name_at(layout_.gamma + 1 + static_cast<Eigen::Index>(p), fmt::format("gamma{}", p + 1),
              spec_.disc_covariates[p]);
    }
    blocks_.push_back({"gamma", layout_.gamma, layout_.n_gamma});
  }
  if (layout_.zeta0 >= 0) {
    for (Eigen::Index i = 0; i < n_items; ++i) {
      name_at(layout_.zeta0 + i, fmt::format("zeta0[{}]", table.item_ids[static_cast<std::size_t>(i)]));
    }
    blocks_.push_back({"zeta0", layout_.zeta0, n_items});
  }
  if (layout_.zeta1 >= 0) {
    for (Eigen::Index i = 0; i < n_items; ++i) {
      name_at(layout_.zeta1 + i, fmt::format("zeta1[{}]", table.item_ids[static_cast<std::size_t>(i)]));
    }
    blocks_.push_back({"zeta1", layout_.zeta1, n_items});
  }
  for (Eigen::Index j = 0; j < n_persons; ++j) {
    name_at(layout_.theta + j, fmt::format("theta[{}]", table.person_ids[static_cast<std::size_t>(j)]));
  }
  blocks_.push_back({"theta", layout_.theta, n_persons});
  if (layout_.log_sigma_b >= 0) {
    name_at(layout_.log_sigma_b, "sigma_b");
    blocks_.push_back({"sigma_b", layout_.log_sigma_b, 1});
  }
  if (layout_.log_sigma_a >= 0) {
    name_at(layout_.log_sigma_a, "sigma_a");
    blocks_.push_back({"sigma_a", layout_.log_sigma_a, 1});
  }
  if (layout_.atanh_rho >= 0) {
    name_at(layout_.atanh_rho, "rho_ab");
    blocks_.push_back({"rho_ab", layout_.atanh_rho, 1});
  }

  // Cells grouped by person, file order within person.
  person_start_.assign(table.n_persons() + 1, 0);
  for (const auto& rec : table.records) ++person_start_[static_cast<std::size_t>(rec.person) + 1];
  for (std::size_t p = 0; p < table.n_persons(); ++p) person_start_[p + 1] += person_start_[p];
  cell_item_.resize(table.records.size());
  cell_category_.resize(table.records.size());
  {
    std::vector<std::size_t> fill(person_start_.begin(), person_start_.end() - 1);
    for (const auto& rec : table.records) {
      const std::size_t s = fill[static_cast<std::size_t>(rec.person)]++;
      cell_item_[s] = rec.item;
      cell_category_[s] = rec.value;
    }
  }
  // Centered rating scale: the location block is mean(b) followed by
  // coordinates on an orthonormal (Helmert) basis of the contrasts.
  if (spec_.parameterization == Parameterization::centered && fam == Family::grm_rating_scale &&
      layout_.zeta0 >= 0 && n_items > 1) {
    contrast_ = Eigen::MatrixXd::Zero(n_items, n_items - 1);
    for (Eigen::Index j = 1; j < n_items; ++j) {
      const double h = 1.0 / std::sqrt(static_cast<double>(j * (j + 1)));
      contrast_.col(j - 1).head(j).setConstant(h);
      contrast_(j, j - 1) = -static_cast<double>(j) * h;
    }
  }
  for (std::size_t p = 0; p < table.n_persons(); p += kPersonsPerBlock) block_start_.push_back(p);
  block_start_.push_back(table.n_persons());
}

Eigen::VectorXd Posterior::location_from(const Eigen::VectorXd& z) const {
  const auto& L = layout_;
  if (contrast_.size() == 0) return z.segment(L.zeta0, L.n_items);
  Eigen::VectorXd b = Eigen::VectorXd::Constant(L.n_items, z[L.zeta0]);
  b += contrast_ * z.segment(L.zeta0 + 1, L.n_items - 1);
  return b;
}

double Posterior::evaluate(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
  const auto& L = layout_;
  if (z.size() != L.dimension) return std::numeric_limits<double>::quiet_NaN();
  if (!z.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  if (grad) grad->setZero(L.dimension);

  const Family fam = spec_.family;
  const bool graded = is_graded(fam);
  const int n_cat = n_categories_;
  const int n_cut = n_cat - 1;
  const Eigen::Index n_items = L.n_items;
  const auto& pr = spec_.priors;

  // Decode constrained values.
  const bool centered = spec_.parameterization == Parameterization::centered;
  const double sigma_b = L.log_sigma_b >= 0 ? transform::positive(z[L.log_sigma_b]) : 0.0;
  const double sigma_a = L.log_sigma_a >= 0 ? transform::positive(z[L.log_sigma_a]) : 0.0;
  const double w = L.atanh_rho >= 0 ? z[L.atanh_rho] : 0.0;
  const double rho = std::tanh(w);
  const double sech = 1.0 / std::cosh(w);

  Eigen::VectorXd zeta0 = Eigen::VectorXd::Zero(n_items);
  Eigen::VectorXd zeta1 = Eigen::VectorXd::Zero(n_items);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n_items);
  Eigen::VectorXd log_a = Eigen::VectorXd::Zero(n_items);
  if (L.beta >= 0) b = x_location_ * z.segment(L.beta, L.n_beta);
  if (L.gamma >= 0) log_a = x_disc_ * z.segment(L.gamma, L.n_gamma);
  if (centered) {
    if (L.zeta0 >= 0) {
      const Eigen::VectorXd loc = location_from(z);
      zeta0 = loc - b;
      b = loc;
    }
    if (L.zeta1 >= 0) {
      zeta1 = z.segment(L.zeta1, n_items) - log_a;
      log_a = z.segment(L.zeta1, n_items);
    }
  } else {
    if (L.zeta0 >= 0) zeta0 = sigma_b * z.segment(L.zeta0, n_items);
    if (L.zeta1 >= 0) {
      if (L.atanh_rho >= 0) {
        zeta1 = sigma_a * (rho * z.segment(L.zeta0, n_items) + sech * z.segment(L.zeta1, n_items));
      } else {
        zeta1 = sigma_a * z.segment(L.zeta1, n_items);
      }
    }
    b += zeta0;
    log_a += zeta1;
  }

  const Eigen::Index threshold_rows = fam == Family::grm_rating_scale ? 1 : n_items;
  // Centered rating-scale cutpoints are stored relative to mean(b).
  const bool shifted = contrast_.size() > 0;
  const double alpha_shift = shifted ? b.mean() : 0.0;
  std::vector<double> alpha(static_cast<std::size_t>(L.n_thresholds));
  for (Eigen::Index r = 0; graded && r < threshold_rows; ++r) {
    transform::ordered(std::span<const double>(z.data() + L.thresholds + r * n_cut, n_cut),
                       std::span<double>(alpha.data() + r * n_cut, n_cut));
  }
  for (double& v : alpha) v += alpha_shift;
  const Eigen::VectorXd a = log_a.array().exp();

  // Category caches for graded families.
  std::vector<CategoryCache> cache;
  if (graded) {
    cache.resize(static_cast<std::size_t>(n_items * n_cat));
    for (Eigen::Index i = 0; i < n_items; ++i) {
      const double* al = alpha.data() + (threshold_rows == 1 ? 0 : i * n_cut);
      for (int k = 1; k <= n_cat; ++k) {
        CategoryCache& c = cache[static_cast<std::size_t>(i * n_cat + k - 1)];
        c.upper = k < n_cat ? a[i] * al[k - 1] : kAbsent;
        c.lower = k > 1 ? a[i] * al[k - 2] : -kAbsent;
        if (k > 1 && k < n_cat) {
          const double gap = a[i] * (al[k - 1] - al[k - 2]);
          c.log_gap = std::log(-std::expm1(-gap));
          c.inv_gap = 1.0 / std::expm1(gap);
        } else {
          c.log_gap = 0.0;
          c.inv_gap = 0.0;
        }
      }
    }
  }

  // Likelihood over person blocks.
  const std::size_t n_blocks = block_start_.size() - 1;
  const bool want_grad = grad != nullptr;
  const std::size_t item_stride = static_cast<std::size_t>(n_items);
  const std::size_t cut_stride = static_cast<std::size_t>(threshold_rows * n_cut);
  std::vector<double> block_lp(n_blocks, 0.0);
  std::vector<double> block_s0(want_grad ? n_blocks * item_stride : 0, 0.0);
  std::vector<double> block_s1(want_grad ? n_blocks * item_stride : 0, 0.0);
  // Per-block, per-item sums of the bound derivatives by cutpoint, padded
  // with a dummy slot at each end of a row; scaled by a_i when reduced.
  const std::size_t pad_stride = static_cast<std::size_t>(n_items * (n_cat + 1));
  std::vector<double> block_sa(want_grad && graded ? n_blocks * pad_stride : 0, 0.0);
  const double* theta = z.data() + L.theta;
  double* g_theta = want_grad ? grad->data() + L.theta : nullptr;

  auto run_blocks = [&](auto graded_tag, auto grad_tag) {
    constexpr bool kGraded = decltype(graded_tag)::value;
    constexpr bool kGrad = decltype(grad_tag)::value;
    parallel_for(n_blocks, threads_, [&](std::size_t block_begin, std::size_t block_end) {
      Eigen::ArrayXd x, e, log_f, f_neg;
      const double* const a_p = a.data();
      const double* const b_p = b.data();
      const CategoryCache* const cache_p = cache.data();
      const std::int32_t* const item_p = cell_item_.data();
      const std::int32_t* const cat_p = cell_category_.data();
      const std::size_t* const start_p = person_start_.data();
      const int K = n_cat;
      for (std::size_t blk = block_begin; blk < block_end; ++blk) {
        const std::size_t c0 = person_start_[block_start_[blk]];
        const auto n = static_cast<Eigen::Index>(person_start_[block_start_[blk + 1]] - c0);
        // Arguments of the two log-logistic terms of each cell, u and -l,
        // side by side.
        x.resize(2 * n);
        double* const xp = x.data();
        for (std::size_t p = block_start_[blk]; p < block_start_[blk + 1]; ++p) {
          const double th = theta[p];
          for (std::size_t s = start_p[p]; s < start_p[p + 1]; ++s) {
            const int i = item_p[s];
            const int k = cat_p[s];
            const double at = a_p[i] * (th + b_p[i]);
            const std::size_t c = 2 * (s - c0);
            if constexpr (kGraded) {
              const CategoryCache& cc = cache_p[static_cast<std::size_t>(i) * K + k - 1];
              xp[c] = cc.upper - at;
              xp[c + 1] = at - cc.lower;
            } else {
              xp[c] = (2 * k - 3) * at;
              xp[c + 1] = kAbsent;
            }
          }
        }
        log_logistic_pair(x, e, log_f, f_neg);
        const double* const lf = log_f.data();
        const double* const fn = f_neg.data();

        double lp = 0.0;
        double* s0 = kGrad ? block_s0.data() + blk * item_stride : nullptr;
        double* s1 = kGrad ? block_s1.data() + blk * item_stride : nullptr;
        double* sa = kGrad && kGraded ? block_sa.data() + blk * pad_stride : nullptr;
        for (std::size_t p = block_start_[blk]; p < block_start_[blk + 1]; ++p) {
          double g_th = 0.0;
          for (std::size_t s = start_p[p]; s < start_p[p + 1]; ++s) {
            const int i = item_p[s];
            const std::size_t c = 2 * (s - c0);
            if constexpr (kGraded) {
              const int k = cat_p[s];
              const CategoryCache& cc = cache_p[static_cast<std::size_t>(i) * K + k - 1];
              lp += lf[c] + lf[c + 1] + cc.log_gap;
              if constexpr (kGrad) {
                const double ai = a_p[i];
                const double gu = fn[c] + cc.inv_gap;
                const double gl = -fn[c + 1] - cc.inv_gap;
                const double dt = -ai * (gu + gl);
                g_th += dt;
                s0[i] += dt;
                s1[i] += gu * xp[c] - gl * xp[c + 1];
                double* sa_row = sa + static_cast<std::size_t>(i) * (K + 1);
                sa_row[k] += gu;
                sa_row[k - 1] += gl;
              }
            } else {
              // Pr(y = 1) = F(at); category 2 is y = 1.
              lp += lf[c];
              if constexpr (kGrad) {
                const bool yes = cat_p[s] == 2;
                const double g = yes ? fn[c] : -fn[c];  // d lp / d(at)
                const double at = yes ? xp[c] : -xp[c];
                const double dt = a_p[i] * g;
                g_th += dt;
                s0[i] += dt;
                s1[i] += g * at;
              }
            }
          }
          if constexpr (kGrad) g_theta[p] = g_th;
        }
        block_lp[blk] = lp;
      }
    });
  };
  using Yes = std::true_type;
  using No = std::false_type;
  if (graded && want_grad) run_blocks(Yes{}, Yes{});
  else if (graded) run_blocks(Yes{}, No{});
  else if (want_grad) run_blocks(No{}, Yes{});
  else run_blocks(No{}, No{});

  double lp = pairwise_sum(block_lp);

  // Item-level score vectors, reduced in block order.
  Eigen::VectorXd s0 = Eigen::VectorXd::Zero(n_items);
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(n_items);
  std::vector<double> s_alpha(cut_stride, 0.0);
  if (want_grad) {
    for (std::size_t blk = 0; blk < n_blocks; ++blk) {
      for (std::size_t i = 0; i < item_stride; ++i) {
        s0[static_cast<Eigen::Index>(i)] += block_s0[blk * item_stride + i];
        s1[static_cast<Eigen::Index>(i)] += block_s1[blk * item_stride + i];
      }
      if (graded) {
        for (Eigen::Index i = 0; i < n_items; ++i) {
          const double* row = block_sa.data() + blk * pad_stride + static_cast<std::size_t>(i * (n_cat + 1));
          double* out = s_alpha.data() + (threshold_rows == 1 ? 0 : static_cast<std::size_t>(i * n_cut));
          for (int k = 0; k < n_cut; ++k) out[k] += a[i] * row[k + 1];
        }
      }
    }
  }

  // theta ~ N(0, 1)
  {
    const auto th = z.segment(L.theta, L.n_persons);
    lp += -kLogSqrt2Pi * static_cast<double>(L.n_persons) - 0.5 * th.squaredNorm();
    if (want_grad) grad->segment(L.theta, L.n_persons) -= th;
  }

  // Thresholds: Student-t prior on each cutpoint, then the ordered transform.
  if (graded) {
    for (std::size_t c = 0; c < alpha.size(); ++c) {
      lp += student_t_lpdf(alpha[c], pr.threshold_df, pr.threshold_location, pr.threshold_scale);
      if (want_grad) {
        s_alpha[c] += student_t_dlpdf(alpha[c], pr.threshold_df, pr.threshold_location, pr.threshold_scale);
      }
    }
    for (Eigen::Index r = 0; r < threshold_rows; ++r) {
      std::span<const double> zr(z.data() + L.thresholds + r * n_cut, n_cut);
      lp += transform::ordered_log_jacobian(zr);
      if (want_grad) {
        transform::ordered_gradient(zr, std::span<const double>(s_alpha.data() + r * n_cut, n_cut),
                                    std::span<double>(grad->data() + L.thresholds + r * n_cut, n_cut));
      }
    }
  }

  if (shifted && want_grad) {
    double total = 0.0;
    for (double v : s_alpha) total += v;
    s0.array() += total / static_cast<double>(n_items);
  }

  if (centered) {
    lp += centered_prior(z, zeta0, zeta1, sigma_b, sigma_a, w, s0, s1, grad);
    return lp;
  }

  if (L.beta >= 0) {
    const auto beta = z.segment(L.beta, L.n_beta);
    for (Eigen::Index c = 0; c < L.n_beta; ++c) lp += normal_lpdf(beta[c], pr.beta);
    if (want_grad) {
      grad->segment(L.beta, L.n_beta) = x_location_.transpose() * s0 - beta / (pr.beta * pr.beta);
    }
  }
  if (L.gamma >= 0) {
    const auto gamma = z.segment(L.gamma, L.n_gamma);
    for (Eigen::Index c = 0; c < L.n_gamma; ++c) lp += normal_lpdf(gamma[c], pr.gamma);
    if (want_grad) {
      grad->segment(L.gamma, L.n_gamma) = x_disc_.transpose() * s1 - gamma / (pr.gamma * pr.gamma);
    }
  }

  // Standardized deviates ~ N(0, 1).
  if (L.zeta0 >= 0) {
    const auto e0 = z.segment(L.zeta0, n_items);
    lp += -kLogSqrt2Pi * static_cast<double>(n_items) - 0.5 * e0.squaredNorm();
    if (want_grad) {
      auto g = grad->segment(L.zeta0, n_items);
      g = sigma_b * s0 - e0;
      if (L.atanh_rho >= 0) g += sigma_a * rho * s1;
    }
  }
  if (L.zeta1 >= 0) {
    const auto e1 = z.segment(L.zeta1, n_items);
    lp += -kLogSqrt2Pi * static_cast<double>(n_items) - 0.5 * e1.squaredNorm();
    if (want_grad) {
      const double scale = L.atanh_rho >= 0 ? sigma_a * sech : sigma_a;
      grad->segment(L.zeta1, n_items) = scale * s1 - e1;
    }
  }

  // Scales: half-normal priors plus log Jacobian.
  if (L.log_sigma_b >= 0) {
    lp += half_normal_lpdf(sigma_b, pr.sd_location) + transform::positive_log_jacobian(z[L.log_sigma_b]);
    if (want_grad) {
      (*grad)[L.log_sigma_b] =
          s0.dot(zeta0) - sigma_b * sigma_b / (pr.sd_location * pr.sd_location) + 1.0;
    }
  }
  if (L.log_sigma_a >= 0) {
    lp += half_normal_lpdf(sigma_a, pr.sd_disc) + transform::positive_log_jacobian(z[L.log_sigma_a]);
    if (want_grad) {
      (*grad)[L.log_sigma_a] = s1.dot(zeta1) - sigma_a * sigma_a / (pr.sd_disc * pr.sd_disc) + 1.0;
    }
  }
  // rho ~ uniform(-1, 1)
  if (L.atanh_rho >= 0) {
    lp += std::log(0.5) + transform::correlation_log_jacobian(w);
    if (want_grad) {
      const auto e0 = z.segment(L.zeta0, n_items);
      const auto e1 = z.segment(L.zeta1, n_items);
      // d zeta1 / d w = sigma_a (sech^2 e0 - rho sech e1)
      const double d_w = sigma_a * s1.dot(sech * sech * e0 - rho * sech * e1);
      (*grad)[L.atanh_rho] = d_w - 2.0 * rho;
    }
  }
  return lp;
}

// Priors of the centered coordinates: the item blocks hold b and ln a, and
// the residuals get their bivariate normal density through the Cholesky
// deviates, with the log determinant of that map.
double Posterior::centered_prior(const Eigen::VectorXd& z, const Eigen::VectorXd& zeta0,
                                 const Eigen::VectorXd& zeta1, double sigma_b, double sigma_a, double w,
                                 const Eigen::VectorXd& s0, const Eigen::VectorXd& s1,
                                 Eigen::VectorXd* grad) const {
  const auto& L = layout_;
  const auto& pr = spec_.priors;
  const Eigen::Index n_items = L.n_items;
  const auto n = static_cast<double>(n_items);
  const bool want_grad = grad != nullptr;
  const bool has0 = L.zeta0 >= 0;
  const bool has1 = L.zeta1 >= 0;
  const bool corr = L.atanh_rho >= 0;
  const double rho = corr ? std::tanh(w) : 0.0;
  const double c = corr ? 1.0 / std::cosh(w) : 1.0;

  Eigen::VectorXd e0 = Eigen::VectorXd::Zero(n_items);
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(n_items);
  double lp = 0.0;
  if (has0) {
    e0 = zeta0 / sigma_b;
    lp += -kLogSqrt2Pi * n - 0.5 * e0.squaredNorm() - n * std::log(sigma_b);
  }
  if (has1) {
    e1 = (zeta1 / sigma_a - rho * e0) / c;
    lp += -kLogSqrt2Pi * n - 0.5 * e1.squaredNorm() - n * std::log(sigma_a) - n * std::log(c);
  }

  Eigen::VectorXd d0, d1;  // d prior / d zeta
  if (want_grad) {
    if (has0) {
      d0 = -e0 / sigma_b + (rho / (sigma_b * c)) * e1;
      const Eigen::VectorXd g_b = s0 + d0;
      auto g = grad->segment(L.zeta0, n_items);
      if (contrast_.size() > 0) {
        g[0] = g_b.sum();
        g.tail(n_items - 1) = contrast_.transpose() * g_b;
      } else {
        g = g_b;
      }
    }
    if (has1) {
      d1 = -e1 / (sigma_a * c);
      grad->segment(L.zeta1, n_items) = s1 + d1;
    }
  }

  if (L.beta >= 0) {
    const auto beta = z.segment(L.beta, L.n_beta);
    for (Eigen::Index k = 0; k < L.n_beta; ++k) lp += normal_lpdf(beta[k], pr.beta);
    if (want_grad) {
      auto g = grad->segment(L.beta, L.n_beta);
      g = -beta / (pr.beta * pr.beta);
      if (has0) g -= x_location_.transpose() * d0;
    }
  }
  if (L.gamma >= 0) {
    const auto gamma = z.segment(L.gamma, L.n_gamma);
    for (Eigen::Index k = 0; k < L.n_gamma; ++k) lp += normal_lpdf(gamma[k], pr.gamma);
    if (want_grad) {
      auto g = grad->segment(L.gamma, L.n_gamma);
      g = -gamma / (pr.gamma * pr.gamma);
      if (has1) g -= x_disc_.transpose() * d1;
    }
  }

  if (L.log_sigma_b >= 0) {
    lp += half_normal_lpdf(sigma_b, pr.sd_location) + transform::positive_log_jacobian(z[L.log_sigma_b]);
    if (want_grad) {
      (*grad)[L.log_sigma_b] = e0.squaredNorm() - (rho / c) * e0.dot(e1) - n -
                               sigma_b * sigma_b / (pr.sd_location * pr.sd_location) + 1.0;
    }
  }
  if (L.log_sigma_a >= 0) {
    lp += half_normal_lpdf(sigma_a, pr.sd_disc) + transform::positive_log_jacobian(z[L.log_sigma_a]);
    if (want_grad) {
      (*grad)[L.log_sigma_a] = e1.dot(zeta1) / (sigma_a * c) - n -
                               sigma_a * sigma_a / (pr.sd_disc * pr.sd_disc) + 1.0;
    }
  }
  if (corr) {
    lp += std::log(0.5) + transform::correlation_log_jacobian(w);
    if (want_grad) {
      (*grad)[L.atanh_rho] = c * e0.dot(e1) - rho * e1.squaredNorm() + n * rho - 2.0 * rho;
    }
  }
  return lp;
}

double Posterior::log_density_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const {
  return evaluate(z, &grad);
}

double Posterior::log_density(const Eigen::VectorXd& z) const {
  if (z.size() != layout_.dimension) {
    throw ValidationError(fmt::format("log_density: expected dimension {}, got {}", layout_.dimension, z.size()));
  }
  if (!z.allFinite()) throw ValidationError("log_density: non-finite unconstrained vector");
  return evaluate(z, nullptr);
}

Eigen::VectorXd Posterior::gradient(const Eigen::VectorXd& z) const {
  if (z.size() != layout_.dimension) {
    throw ValidationError(fmt::format("gradient: expected dimension {}, got {}", layout_.dimension, z.size()));
  }
  if (!z.allFinite()) throw ValidationError("gradient: non-finite unconstrained vector");
  Eigen::VectorXd g;
  evaluate(z, &g);
  return g;
}

ParameterState Posterior::state(const Eigen::VectorXd& z) const {
  const auto& L = layout_;
  if (z.size() != L.dimension) throw ValidationError("state: dimension mismatch");
  ParameterState s;
  const int n_cut = n_categories_ - 1;
  if (L.thresholds >= 0) {
    const Eigen::Index rows = spec_.family == Family::grm_rating_scale ? 1 : L.n_items;
    s.thresholds.resize(rows, n_cut);
    std::vector<double> row(static_cast<std::size_t>(n_cut));
    for (Eigen::Index r = 0; r < rows; ++r) {
      transform::ordered(std::span<const double>(z.data() + L.thresholds + r * n_cut, n_cut), row);
      for (int k = 0; k < n_cut; ++k) s.thresholds(r, k) = row[static_cast<std::size_t>(k)];
    }
  }
  if (L.beta >= 0) s.beta = z.segment(L.beta, L.n_beta);
  if (L.gamma >= 0) s.gamma = z.segment(L.gamma, L.n_gamma);
  s.sigma_b = L.log_sigma_b >= 0 ? transform::positive(z[L.log_sigma_b]) : 0.0;
  s.sigma_a = L.log_sigma_a >= 0 ? transform::positive(z[L.log_sigma_a]) : 0.0;
  s.rho = L.atanh_rho >= 0 ? transform::correlation(z[L.atanh_rho]) : 0.0;
  if (spec_.parameterization == Parameterization::centered) {
    if (L.zeta0 >= 0) s.zeta0 = location_from(z) - x_location_ * s.beta;
    if (L.zeta1 >= 0) s.zeta1 = z.segment(L.zeta1, L.n_items) - x_disc_ * s.gamma;
    if (contrast_.size() > 0) s.thresholds.array() += z[L.zeta0];
  } else {
    if (L.zeta0 >= 0) s.zeta0 = s.sigma_b * z.segment(L.zeta0, L.n_items);
    if (L.zeta1 >= 0) {
      if (L.atanh_rho >= 0) {
        const double sech = 1.0 / std::cosh(z[L.atanh_rho]);
        s.zeta1 = s.sigma_a * (s.rho * z.segment(L.zeta0, L.n_items) + sech * z.segment(L.zeta1, L.n_items));
      } else {
        s.zeta1 = s.sigma_a * z.segment(L.zeta1, L.n_items);
      }
    }
  }
  s.theta = z.segment(L.theta, L.n_persons);
  return s;
}

Eigen::VectorXd Posterior::unconstrain(const ParameterState& s) const {
  const auto& L = layout_;
  Eigen::VectorXd z(L.dimension);
  const int n_cut = n_categories_ - 1;
  const bool centered = spec_.parameterization == Parameterization::centered;
  double shift = 0.0;
  if (centered && contrast_.size() > 0) {
    if (s.zeta0.size() != L.n_items || s.beta.size() != L.n_beta) {
      throw ValidationError("unconstrain: location block has the wrong length");
    }
    shift = (x_location_ * s.beta + s.zeta0).mean();
  }
  if (L.thresholds >= 0) {
    const Eigen::Index rows = spec_.family == Family::grm_rating_scale ? 1 : L.n_items;
    if (s.thresholds.rows() != rows || s.thresholds.cols() != n_cut) {
      throw ValidationError("unconstrain: threshold matrix has the wrong shape");
    }
    std::vector<double> row(static_cast<std::size_t>(n_cut));
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (int k = 0; k < n_cut; ++k) row[static_cast<std::size_t>(k)] = s.thresholds(r, k) - shift;
      transform::ordered_inverse(row, std::span<double>(z.data() + L.thresholds + r * n_cut, n_cut));
    }
  }
  auto copy = [&](Eigen::Index at, const Eigen::VectorXd& v, Eigen::Index n, const char* what) {
    if (at < 0) return;
    if (v.size() != n) throw ValidationError(fmt::format("unconstrain: {} has the wrong length", what));
    z.segment(at, n) = v;
  };
  copy(L.beta, s.beta, L.n_beta, "beta");
  copy(L.gamma, s.gamma, L.n_gamma, "gamma");
  copy(L.theta, s.theta, L.n_persons, "theta");
  if (L.log_sigma_b >= 0) z[L.log_sigma_b] = transform::positive_inverse(s.sigma_b);
  if (L.log_sigma_a >= 0) z[L.log_sigma_a] = transform::positive_inverse(s.sigma_a);
  if (L.atanh_rho >= 0) z[L.atanh_rho] = transform::correlation_inverse(s.rho);
  if (centered) {
    if (L.zeta0 >= 0) {
      if (s.zeta0.size() != L.n_items) throw ValidationError("unconstrain: zeta0 has the wrong length");
      const Eigen::VectorXd loc = x_location_ * s.beta + s.zeta0;
      if (contrast_.size() > 0) {
        z[L.zeta0] = loc.mean();
        z.segment(L.zeta0 + 1, L.n_items - 1) = contrast_.transpose() * loc;
      } else {
        z.segment(L.zeta0, L.n_items) = loc;
      }
    }
    if (L.zeta1 >= 0) {
      if (s.zeta1.size() != L.n_items) throw ValidationError("unconstrain: zeta1 has the wrong length");
      z.segment(L.zeta1, L.n_items) = x_disc_ * s.gamma + s.zeta1;
    }
    return z;
  }
  if (L.zeta0 >= 0) {
    if (s.zeta0.size() != L.n_items) throw ValidationError("unconstrain: zeta0 has the wrong length");
    z.segment(L.zeta0, L.n_items) = s.zeta0 / s.sigma_b;
  }
  if (L.zeta1 >= 0) {
    if (s.zeta1.size() != L.n_items) throw ValidationError("unconstrain: zeta1 has the wrong length");
    if (L.atanh_rho >= 0) {
      const double c = std::sqrt((1.0 - s.rho) * (1.0 + s.rho));
      z.segment(L.zeta1, L.n_items) = (s.zeta1 / s.sigma_a - s.rho * z.segment(L.zeta0, L.n_items)) / c;
    } else {
      z.segment(L.zeta1, L.n_items) = s.zeta1 / s.sigma_a;
    }
  }
  return z;
}

Eigen::VectorXd Posterior::flatten(const ParameterState& s) const {
  const auto& L = layout_;
  Eigen::VectorXd out(L.dimension);
  if (L.thresholds >= 0) {
    const int n_cut = n_categories_ - 1;
    for (Eigen::Index r = 0; r < s.thresholds.rows(); ++r) {
      for (int k = 0; k < n_cut; ++k) out[L.thresholds + r * n_cut + k] = s.thresholds(r, k);
    }
  }
  if (L.beta >= 0) out.segment(L.beta, L.n_beta) = s.beta;
  if (L.gamma >= 0) out.segment(L.gamma, L.n_gamma) = s.gamma;
  if (L.zeta0 >= 0) out.segment(L.zeta0, L.n_items) = s.zeta0;
  if (L.zeta1 >= 0) out.segment(L.zeta1, L.n_items) = s.zeta1;
  out.segment(L.theta, L.n_persons) = s.theta;
  if (L.log_sigma_b >= 0) out[L.log_sigma_b] = s.sigma_b;
  if (L.log_sigma_a >= 0) out[L.log_sigma_a] = s.sigma_a;
  if (L.atanh_rho >= 0) out[L.atanh_rho] = s.rho;
  return out;
}

Eigen::VectorXd Posterior::constrain(const Eigen::VectorXd& z) const { return flatten(state(z)); }

Posterior build_posterior(const ModelSpec& spec, const ResponseTable& table, const ItemDesign& design,
                          int threads) {
  return Posterior(spec, table, design, threads);
}

}  // namespace eirm
