#include "eirm/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "eirm/csv.hpp"
#include "eirm/error.hpp"
#include "eirm/parallel.hpp"
#include "eirm/rng.hpp"

namespace eirm {

Eigen::MatrixXd RdDesign::matrix() const {
  const auto n = static_cast<Eigen::Index>(negative.size());
  Eigen::MatrixXd x(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    x(i, 0) = 1.0;
    x(i, 1) = negative[s];
    x(i, 2) = centered_position[s];
    x(i, 3) = interaction[s];
  }
  return x;
}

RdDesign build_rd_design(const ItemDesign& design) {
  if (design.items.empty()) throw ValidationError("rd design: no items");
  for (std::size_t i = 1; i < design.items.size(); ++i) {
    if (design.items[i].position <= design.items[i - 1].position) {
      throw ValidationError("rd design: items must be sorted by strictly increasing position");
    }
  }
  std::size_t first_negative = design.items.size();
  for (std::size_t i = 0; i < design.items.size(); ++i) {
    if (design.items[i].negative) {
      first_negative = i;
      break;
    }
  }
  if (first_negative == 0 || first_negative == design.items.size()) {
    throw ValidationError("rd design: framing never switches between positive and negative items, so there is no boundary");
  }
  for (std::size_t i = first_negative; i < design.items.size(); ++i) {
    if (!design.items[i].negative) {
      throw ValidationError(fmt::format(
          "rd design: item '{}' (position {}) is positive after the switch to negative framing; "
          "the discontinuity model needs one contiguous switch. Use the plain framing contrast instead",
          design.items[i].id, design.items[i].position));
    }
  }
  RdDesign rd;
  rd.boundary = 0.5 * (design.items[first_negative - 1].position + design.items[first_negative].position);
  for (const auto& it : design.items) {
    const double neg = it.negative ? 1.0 : 0.0;
    const double c = it.position - rd.boundary;
    rd.negative.push_back(neg);
    rd.centered_position.push_back(c);
    rd.interaction.push_back(neg * c);
  }
  return rd;
}

void add_rd_covariates(ItemDesign& design) {
  const RdDesign rd = build_rd_design(design);
  design.add_covariate(std::string(kCenteredPosition), rd.centered_position);
  design.add_covariate(std::string(kNegativeByPosition), rd.interaction);
}

OlsFit ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n) throw ValidationError(fmt::format("ols: {} responses but {} design rows", y.size(), n));
  if (p < 1) throw ValidationError("ols: design has no columns");
  if (n <= p) throw ValidationError(fmt::format("ols: need more observations ({}) than coefficients ({})", n, p));
  if (!y.allFinite() || !x.allFinite()) throw ValidationError("ols: non-finite input");
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) throw ValidationError(fmt::format("ols: design matrix is rank deficient (rank {} of {})", qr.rank(), p));
  OlsFit fit;
  fit.n = static_cast<int>(n);
  fit.coefficients = qr.solve(y);
  const Eigen::VectorXd resid = y - x * fit.coefficients;
  fit.residual_variance = resid.squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = fit.residual_variance * xtx_inv;
  fit.standard_errors = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

nlohmann::json PermutationResult::to_json() const {
  return {{"observed", observed},
          {"b", b},
          {"p_value", p_value},
          {"seed", seed},
          {"statistic", "framing coefficient of the OLS discontinuity fit of log discrimination"}};
}

double rd_framing_coefficient(const Eigen::VectorXd& log_a, const Eigen::MatrixXd& rd_matrix) {
  return ols(log_a, rd_matrix).coefficients[1];
}

PermutationResult randomization_test(const Eigen::VectorXd& log_a_hat, const ItemDesign& design, int b,
                                     std::uint64_t seed, int threads) {
  if (b < 1) throw ValidationError("randomization test: B must be >= 1");
  if (static_cast<std::size_t>(log_a_hat.size()) != design.size()) {
    throw ValidationError(fmt::format("randomization test: {} estimates for {} items", log_a_hat.size(), design.size()));
  }
  const Eigen::MatrixXd x = build_rd_design(design).matrix();
  ols(log_a_hat, x);  // rank and size checks
  // Coefficient as a fixed linear functional of y, shared by every replicate.
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).ldlt().solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  const Eigen::RowVectorXd contrast = (xtx_inv * x.transpose()).row(1);

  PermutationResult out;
  out.b = b;
  out.seed = seed;
  out.observed = contrast.dot(log_a_hat);
  out.statistics.assign(static_cast<std::size_t>(b), 0.0);
  parallel_for(out.statistics.size(), threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd y(log_a_hat.size());
    for (std::size_t r = begin; r < end; ++r) {
      Rng rng = make_stream(seed, r);
      y = log_a_hat;
      for (Eigen::Index i = y.size() - 1; i > 0; --i) {
        std::uniform_int_distribution<Eigen::Index> pick(0, i);
        std::swap(y[i], y[pick(rng)]);
      }
      out.statistics[r] = contrast.dot(y);
    }
  });
  const double tol = 1e-12 * std::max(1.0, std::abs(out.observed));
  int extreme = 0;
  for (double s : out.statistics) {
    if (std::abs(s) >= std::abs(out.observed) - tol) ++extreme;
  }
  out.p_value = (1.0 + extreme) / (1.0 + b);
  return out;
}

CarelessResult careless_filter(const ResponseTable& raw, const ItemDesign& design, double quantile) {
  if (!(quantile > 0.0 && quantile < 1.0)) {
    throw ValidationError(fmt::format("careless filter: quantile {} outside (0, 1)", quantile));
  }
  const std::size_t n = raw.n_persons();
  if (n == 0) throw ValidationError("careless filter: no persons");
  std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
  std::vector<int> count(n, 0);
  // Two passes for a stable variance.
  for (const auto& r : raw.records) {
    sum[static_cast<std::size_t>(r.person)] += r.value;
    ++count[static_cast<std::size_t>(r.person)];
  }
  for (const auto& r : raw.records) {
    const auto p = static_cast<std::size_t>(r.person);
    const double d = r.value - sum[p] / count[p];
    sum_sq[p] += d * d;
  }
  CarelessResult out;
  out.person_sd.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    if (count[p] < 2) {
      throw ValidationError(fmt::format("careless filter: person '{}' has fewer than 2 responses", raw.person_ids[p]));
    }
    out.person_sd[p] = std::sqrt(sum_sq[p] / (count[p] - 1));
  }
  std::vector<double> sorted = out.person_sd;
  std::sort(sorted.begin(), sorted.end());
  // Inverse empirical CDF: smallest value with ECDF >= quantile.
  const auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(n) - 1e-9));
  out.threshold = sorted[std::max<std::size_t>(rank, 1) - 1];
  std::vector<int> keep;
  for (std::size_t p = 0; p < n; ++p) {
    if (out.person_sd[p] <= out.threshold) {
      out.excluded_person_ids.push_back(raw.person_ids[p]);
    } else {
      keep.push_back(static_cast<int>(p));
    }
  }
  Subset s = select_persons(raw, design, keep);
  out.kept = std::move(s.table);
  out.design = std::move(s.design);
  return out;
}

namespace {

bool is_vowel(char c) {
  switch (c) {
    case 'a': case 'e': case 'i': case 'o': case 'u': case 'y':
      return true;
    default:
      return false;
  }
}

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

}  // namespace

int count_syllables(std::string_view word) {
  std::string w;
  for (char c : word) {
    if (is_alpha(c)) w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (w.empty()) return 0;
  int groups = 0;
  bool in_group = false;
  for (char c : w) {
    const bool v = is_vowel(c);
    if (v && !in_group) ++groups;
    in_group = v;
  }
  if (w.size() >= 2 && w.back() == 'e') {
    const char prev = w[w.size() - 2];
    if (!is_vowel(prev) && prev != 'l') --groups;
  }
  return std::max(groups, 1);
}

Readability readability(std::string_view text) {
  Readability r;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::string_view token = text.substr(start, i - start);
    if (std::any_of(token.begin(), token.end(), is_alpha)) {
      ++r.words;
      r.syllables += count_syllables(token);
    }
  }
  for (std::size_t k = 0; k < text.size(); ++k) {
    const bool terminal = text[k] == '.' || text[k] == '!' || text[k] == '?';
    const bool prev_terminal = k > 0 && (text[k - 1] == '.' || text[k - 1] == '!' || text[k - 1] == '?');
    if (terminal && !prev_terminal) ++r.sentences;
  }
  if (r.words == 0) throw ValidationError("readability: text contains no words");
  r.sentences = std::max(r.sentences, 1);
  r.grade = 0.39 * (static_cast<double>(r.words) / r.sentences) +
            11.8 * (static_cast<double>(r.syllables) / r.words) - 15.59;
  return r;
}

double flesch_kincaid(std::string_view text) { return readability(text).grade; }

EffectSize effect_transforms(double gamma1, double sigma_a) {
  if (!(sigma_a > 0.0)) throw ValidationError("effect transforms: sigma_a must be > 0");
  if (!std::isfinite(gamma1) || !std::isfinite(sigma_a)) throw ValidationError("effect transforms: non-finite input");
  return {std::expm1(gamma1), gamma1 / sigma_a};
}

std::string_view framing_label(bool negative) { return negative ? "negative" : "positive"; }

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

}  // namespace

void write_boxplot_csv(const std::vector<ItemEstimate>& a_hat, const std::filesystem::path& path) {
  if (a_hat.empty()) throw ValidationError("boxplot table: no items");
  std::ofstream out = open_output(path);
  csv::Writer w(out);
  w.row({"item_id", "framing", "a_hat"});
  for (const auto& e : a_hat) w.row({e.item_id, std::string(framing_label(e.negative)), csv::format_double(e.value)});
}

void write_scatter_csv(const std::vector<ItemEstimate>& a_hat, const std::filesystem::path& path) {
  if (a_hat.empty()) throw ValidationError("scatter table: no items");
  std::vector<ItemEstimate> rows = a_hat;
  std::stable_sort(rows.begin(), rows.end(), [](const auto& l, const auto& r) { return l.position < r.position; });
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> fitted(rows.size(), kNaN), lower(rows.size(), kNaN), upper(rows.size(), kNaN);
  for (bool group : {false, true}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].negative == group) idx.push_back(i);
    }
    if (idx.size() < 3) continue;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      x(r, 0) = 1.0;
      x(r, 1) = rows[idx[k]].position;
      y[r] = rows[idx[k]].value;
    }
    OlsFit fit;
    try {
      fit = ols(y, x);
    } catch (const ValidationError&) {
      continue;
    }
    const boost::math::students_t t_dist(static_cast<double>(fit.n - 2));
    const double t = boost::math::quantile(t_dist, 0.975);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Eigen::Vector2d x0(1.0, rows[idx[k]].position);
      const double f = x0.dot(fit.coefficients);
      const double se = std::sqrt(std::max(0.0, x0.dot(fit.covariance * x0)));
      fitted[idx[k]] = f;
      lower[idx[k]] = f - t * se;
      upper[idx[k]] = f + t * se;
    }
  }
  std::ofstream out = open_output(path);
  csv::Writer w(out);
  w.row({"position", "item_id", "framing", "a_hat", "fitted", "lower95", "upper95"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    w.row({std::to_string(rows[i].position), rows[i].item_id, std::string(framing_label(rows[i].negative)),
           csv::format_double(rows[i].value), csv::format_double(fitted[i]), csv::format_double(lower[i]),
           csv::format_double(upper[i])});
  }
}

void write_interval_csv(std::vector<ItemInterval> rows, const std::filesystem::path& path) {
  if (rows.empty()) throw ValidationError("interval table: no items");
  std::stable_sort(rows.begin(), rows.end(), [](const auto& l, const auto& r) { return l.position < r.position; });
  std::ofstream out = open_output(path);
  csv::Writer w(out);
  w.row({"item_id", "position", "framing", "median", "lower95", "upper95"});
  for (const auto& r : rows) {
    w.row({r.item_id, std::to_string(r.position), std::string(framing_label(r.negative)), csv::format_double(r.median),
           csv::format_double(r.lower), csv::format_double(r.upper)});
  }
}

}  // namespace eirm
