#include "eirm/mml.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "eirm/csv.hpp"
#include "eirm/error.hpp"
#include "eirm/kernel.hpp"
#include "eirm/parallel.hpp"

namespace eirm {

QuadratureRule QuadratureRule::rectangle(int n, double lo, double hi) {
  if (n < 2) throw ValidationError("quadrature: need at least 2 nodes");
  if (!(hi > lo)) throw ValidationError("quadrature: empty interval");
  QuadratureRule rule;
  double total = 0.0;
  for (int q = 0; q < n; ++q) {
    const double x = lo + (hi - lo) * q / (n - 1);
    rule.nodes.push_back(x);
    rule.weights.push_back(std::exp(-0.5 * x * x));
    total += rule.weights.back();
  }
  for (double& w : rule.weights) w /= total;
  return rule;
}

std::string_view to_string(MmlVariant v) {
  return v == MmlVariant::rating_scale ? "rating_scale" : "free_threshold";
}

MmlVariant mml_variant_from_string(std::string_view name) {
  if (name == "rating_scale") return MmlVariant::rating_scale;
  if (name == "free_threshold") return MmlVariant::free_threshold;
  throw ValidationError(fmt::format("unknown variant '{}' (expected rating_scale or free_threshold)", name));
}

namespace {

constexpr std::size_t kBlock = 64;

struct Cells {
  int n_items = 0;
  int n_categories = 2;
  std::vector<std::size_t> person_start;
  std::vector<int> item;
  std::vector<int> category;
};

Cells group_cells(const ResponseTable& table, int n_categories) {
  Cells c;
  c.n_items = static_cast<int>(table.n_items());
  c.n_categories = n_categories;
  const std::size_t J = table.n_persons();
  std::vector<std::size_t> count(J + 1, 0);
  for (const auto& r : table.records) {
    if (r.value < 1 || r.value > n_categories) {
      throw ValidationError(fmt::format("mml: response category {} outside 1..{}; convert with to_categories", r.value,
                                        n_categories));
    }
    ++count[static_cast<std::size_t>(r.person) + 1];
  }
  for (std::size_t j = 0; j < J; ++j) count[j + 1] += count[j];
  c.person_start = count;
  c.item.resize(table.records.size());
  c.category.resize(table.records.size());
  std::vector<std::size_t> fill(count.begin(), count.end() - 1);
  for (const auto& r : table.records) {
    const std::size_t at = fill[static_cast<std::size_t>(r.person)]++;
    c.item[at] = r.item;
    c.category[at] = r.value;
  }
  return c;
}

struct Params {
  Eigen::VectorXd log_a;
  Eigen::VectorXd b;
  Eigen::MatrixXd alpha;  // 1 row shared or one per item
  bool shared() const { return alpha.rows() == 1; }
  std::span<const double> row(int i, std::vector<double>& buf) const {
    const Eigen::Index r = shared() ? 0 : i;
    buf.resize(static_cast<std::size_t>(alpha.cols()));
    for (Eigen::Index k = 0; k < alpha.cols(); ++k) buf[static_cast<std::size_t>(k)] = alpha(r, k);
    return buf;
  }
};

bool ordered_row(const Eigen::MatrixXd& alpha, Eigen::Index r) {
  for (Eigen::Index k = 0; k < alpha.cols(); ++k) {
    if (!std::isfinite(alpha(r, k))) return false;
    if (k > 0 && !(alpha(r, k) > alpha(r, k - 1))) return false;
  }
  return true;
}

// log Pr(y = k | theta_q) for every item, node, and category.
std::vector<double> log_prob_table(const Params& p, const QuadratureRule& rule, int K) {
  const int I = static_cast<int>(p.log_a.size());
  const std::size_t Q = rule.nodes.size();
  std::vector<double> lp(static_cast<std::size_t>(I) * Q * static_cast<std::size_t>(K));
  std::vector<double> buf;
  for (int i = 0; i < I; ++i) {
    const double a = std::exp(p.log_a[i]);
    const auto alpha = p.row(i, buf);
    const double b = p.shared() ? p.b[i] : 0.0;
    for (std::size_t q = 0; q < Q; ++q) {
      const double t = rule.nodes[q] + b;
      for (int k = 1; k <= K; ++k) {
        const double u = k < K ? a * (alpha[static_cast<std::size_t>(k - 1)] - t) : 0.0;
        const double l = k > 1 ? a * (alpha[static_cast<std::size_t>(k - 2)] - t) : 0.0;
        lp[(static_cast<std::size_t>(i) * Q + q) * K + static_cast<std::size_t>(k - 1)] =
            kernel::category_term(k, K, u, l).log_prob;
      }
    }
  }
  return lp;
}

// Marginal log-likelihood and, optionally, expected counts r[i][q][k].
double e_step(const Cells& cells, const std::vector<double>& lp, const QuadratureRule& rule, int threads,
              std::vector<double>* counts) {
  const std::size_t J = cells.person_start.size() - 1;
  const std::size_t Q = rule.nodes.size();
  const auto K = static_cast<std::size_t>(cells.n_categories);
  const std::size_t table_size = static_cast<std::size_t>(cells.n_items) * Q * K;
  const std::size_t n_blocks = (J + kBlock - 1) / kBlock;
  std::vector<double> person_ll(J, 0.0);
  std::vector<std::vector<double>> block_counts(counts ? n_blocks : 0);
  std::vector<double> log_w(Q);
  for (std::size_t q = 0; q < Q; ++q) log_w[q] = std::log(rule.weights[q]);

  parallel_for(n_blocks, threads, [&](std::size_t bb, std::size_t be) {
    std::vector<double> post(Q);
    for (std::size_t blk = bb; blk < be; ++blk) {
      std::vector<double>* rc = nullptr;
      if (counts) {
        block_counts[blk].assign(table_size, 0.0);
        rc = &block_counts[blk];
      }
      const std::size_t j_end = std::min(J, (blk + 1) * kBlock);
      for (std::size_t j = blk * kBlock; j < j_end; ++j) {
        std::copy(log_w.begin(), log_w.end(), post.begin());
        for (std::size_t c = cells.person_start[j]; c < cells.person_start[j + 1]; ++c) {
          const double* row = &lp[static_cast<std::size_t>(cells.item[c]) * Q * K + static_cast<std::size_t>(cells.category[c] - 1)];
          for (std::size_t q = 0; q < Q; ++q) post[q] += row[q * K];
        }
        const double m = *std::max_element(post.begin(), post.end());
        double s = 0.0;
        for (std::size_t q = 0; q < Q; ++q) {
          post[q] = std::exp(post[q] - m);
          s += post[q];
        }
        person_ll[j] = m + std::log(s);
        if (rc) {
          for (std::size_t q = 0; q < Q; ++q) post[q] /= s;
          for (std::size_t c = cells.person_start[j]; c < cells.person_start[j + 1]; ++c) {
            double* row = &(*rc)[static_cast<std::size_t>(cells.item[c]) * Q * K + static_cast<std::size_t>(cells.category[c] - 1)];
            for (std::size_t q = 0; q < Q; ++q) row[q * K] += post[q];
          }
        }
      }
    }
  });
  if (counts) {
    counts->assign(table_size, 0.0);
    for (const auto& bc : block_counts) {
      for (std::size_t x = 0; x < table_size; ++x) (*counts)[x] += bc[x];
    }
  }
  return pairwise_sum(person_ll);
}

enum class Block { rating_item, free_item, shared_alpha };

// Expected complete-data log-likelihood of one item and its derivatives in
// the block's parameters:
//   rating_item  (log a, b)
//   free_item    (log a, alpha_1..alpha_{K-1})
//   shared_alpha (alpha_1..alpha_{K-1}); contributions of one item
struct Objective {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

void accumulate_item(const double* r, const QuadratureRule& rule, int K, double log_a, double b,
                     std::span<const double> alpha, Block block, bool derivs, Objective& obj) {
  const double a = std::exp(log_a);
  const std::size_t Q = rule.nodes.size();
  const Eigen::Index dim = obj.grad.size();
  Eigen::VectorXd du(dim), dl(dim);
  for (std::size_t q = 0; q < Q; ++q) {
    const double t = rule.nodes[q] + b;
    for (int k = 1; k <= K; ++k) {
      const double w = r[q * static_cast<std::size_t>(K) + static_cast<std::size_t>(k - 1)];
      if (w == 0.0) continue;
      const bool has_u = k < K;
      const bool has_l = k > 1;
      const double u = has_u ? a * (alpha[static_cast<std::size_t>(k - 1)] - t) : 0.0;
      const double l = has_l ? a * (alpha[static_cast<std::size_t>(k - 2)] - t) : 0.0;
      const auto term = kernel::category_term(k, K, u, l);
      obj.value += w * term.log_prob;
      if (!derivs) continue;
      const double gu = term.d_upper, gl = term.d_lower;
      const double huu = has_u ? gu * (1.0 - 2.0 * kernel::logistic(u)) - gu * gu : 0.0;
      const double hll = has_l ? gl * (1.0 - 2.0 * kernel::logistic(l)) - gl * gl : 0.0;
      const double hul = -gu * gl;
      du.setZero();
      dl.setZero();
      switch (block) {
        case Block::rating_item:
          if (has_u) du << u, -a;
          if (has_l) dl << l, -a;
          break;
        case Block::free_item:
          if (has_u) {
            du[0] = u;
            du[k] = a;
          }
          if (has_l) {
            dl[0] = l;
            dl[k - 1] = a;
          }
          break;
        case Block::shared_alpha:
          if (has_u) du[k - 1] = a;
          if (has_l) dl[k - 2] = a;
          break;
      }
      obj.grad += w * (gu * du + gl * dl);
      obj.hess += w * (huu * du * du.transpose() + hul * (du * dl.transpose() + dl * du.transpose()) +
                       hll * dl * dl.transpose());
      // Second derivatives of the predictors themselves.
      switch (block) {
        case Block::rating_item: {
          const double c = w * (gu * (has_u ? 1.0 : 0.0) * u + gl * (has_l ? 1.0 : 0.0) * l);
          const double m = w * (gu + gl) * (-a);
          obj.hess(0, 0) += c;
          obj.hess(0, 1) += m;
          obj.hess(1, 0) += m;
          break;
        }
        case Block::free_item:
          if (has_u) {
            obj.hess(0, 0) += w * gu * u;
            obj.hess(0, k) += w * gu * a;
            obj.hess(k, 0) += w * gu * a;
          }
          if (has_l) {
            obj.hess(0, 0) += w * gl * l;
            obj.hess(0, k - 1) += w * gl * a;
            obj.hess(k - 1, 0) += w * gl * a;
          }
          break;
        case Block::shared_alpha:
          break;
      }
    }
  }
}

// Damped Newton ascent on a block. `eval(x, derivs)` returns the objective at
// x (value -inf when x is infeasible). Returns the accepted point.
template <class Eval>
Eigen::VectorXd newton_ascent(Eigen::VectorXd x, Eval&& eval, int max_steps) {
  Objective cur = eval(x, true);
  for (int step = 0; step < max_steps; ++step) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd neg_h = -cur.hess;
    double shift = 0.0;
    const double scale = 1.0 + neg_h.diagonal().cwiseAbs().maxCoeff();
    Eigen::VectorXd dir;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h + shift * Eigen::MatrixXd::Identity(n, n));
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all()) {
        dir = ldlt.solve(cur.grad);
        if (dir.allFinite()) break;
      }
      dir.resize(0);
      shift = shift == 0.0 ? 1e-6 * scale : shift * 10.0;
    }
    if (dir.size() == 0) break;
    double s = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, s *= 0.5) {
      const Eigen::VectorXd trial = x + s * dir;
      const Objective next = eval(trial, false);
      if (std::isfinite(next.value) && next.value >= cur.value) {
        x = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double moved = (s * dir).cwiseAbs().maxCoeff();
    cur = eval(x, true);
    if (moved < 1e-10) break;
  }
  return x;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// Starting values from cumulative response proportions, scaled for the
// attenuation that integrating over theta induces.
Params initial_params(const ResponseTable& table, const ItemDesign& design, MmlVariant variant, int K) {
  const int I = static_cast<int>(table.n_items());
  constexpr double kAttenuation = 1.18;
  std::vector<std::vector<double>> item_counts(static_cast<std::size_t>(I), std::vector<double>(static_cast<std::size_t>(K), 0.0));
  std::vector<double> pooled(static_cast<std::size_t>(K), 0.0);
  for (const auto& r : table.records) {
    item_counts[static_cast<std::size_t>(r.item)][static_cast<std::size_t>(r.value - 1)] += 1.0;
    pooled[static_cast<std::size_t>(r.value - 1)] += 1.0;
  }
  for (int i = 0; i < I; ++i) {
    int distinct = 0;
    for (double c : item_counts[static_cast<std::size_t>(i)]) distinct += c > 0 ? 1 : 0;
    if (distinct < 2) {
      throw ValidationError(fmt::format("mml: item '{}' has responses in fewer than 2 categories",
                                        design.items[static_cast<std::size_t>(i)].id));
    }
  }
  auto cum_logits = [&](const std::vector<double>& counts) {
    double n = 0.0;
    for (double c : counts) n += c;
    const double eps = 0.5 / (n + 1.0);
    std::vector<double> out;
    double cum = 0.0;
    for (int k = 0; k < K - 1; ++k) {
      cum += counts[static_cast<std::size_t>(k)];
      out.push_back(kAttenuation * logit(std::clamp(cum / n, eps, 1.0 - eps)));
    }
    for (std::size_t k = 1; k < out.size(); ++k) out[k] = std::max(out[k], out[k - 1] + 0.05);
    return out;
  };
  Params p;
  p.log_a = Eigen::VectorXd::Zero(I);
  p.b = Eigen::VectorXd::Zero(I);
  const std::vector<double> base = cum_logits(pooled);
  if (variant == MmlVariant::rating_scale) {
    p.alpha.resize(1, K - 1);
    for (int k = 0; k < K - 1; ++k) p.alpha(0, k) = base[static_cast<std::size_t>(k)];
    for (int i = 0; i < I; ++i) {
      const auto own = cum_logits(item_counts[static_cast<std::size_t>(i)]);
      double s = 0.0;
      for (int k = 0; k < K - 1; ++k) s += base[static_cast<std::size_t>(k)] - own[static_cast<std::size_t>(k)];
      p.b[i] = s / (K - 1);
    }
    const double mb = p.b.mean();
    p.b.array() -= mb;
  } else {
    p.alpha.resize(I, K - 1);
    for (int i = 0; i < I; ++i) {
      const auto own = cum_logits(item_counts[static_cast<std::size_t>(i)]);
      for (int k = 0; k < K - 1; ++k) p.alpha(i, k) = own[static_cast<std::size_t>(k)];
    }
  }
  return p;
}

void check_inputs(const ResponseTable& table, const ItemDesign& design) {
  if (design.n_categories < 2) throw ValidationError("mml: need K >= 2");
  if (table.n_items() != design.size()) {
    throw ValidationError(fmt::format("mml: table has {} items but design has {}", table.n_items(), design.size()));
  }
  if (table.records.empty()) throw ValidationError("mml: no responses");
}

}  // namespace

double marginal_loglik(const ResponseTable& table, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                       const Eigen::MatrixXd& thresholds, const QuadratureRule& rule, int threads) {
  const int K = static_cast<int>(thresholds.cols()) + 1;
  const Cells cells = group_cells(table, K);
  Params p;
  p.log_a = a.array().log();
  p.b = b;
  p.alpha = thresholds;
  if (p.log_a.size() != static_cast<Eigen::Index>(table.n_items()) ||
      (thresholds.rows() != 1 && thresholds.rows() != p.log_a.size())) {
    throw ValidationError("marginal_loglik: parameter dimensions do not match the table");
  }
  return e_step(cells, log_prob_table(p, rule, K), rule, threads, nullptr);
}

MmlEstimates fit_mml(const ResponseTable& table, const ItemDesign& design, MmlVariant variant,
                     const QuadratureRule& rule, const MmlOptions& options) {
  check_inputs(table, design);
  const int K = design.n_categories;
  const int I = static_cast<int>(table.n_items());
  const Cells cells = group_cells(table, K);
  const std::size_t Q = rule.nodes.size();
  Params p = initial_params(table, design, variant, K);
  constexpr int kNewtonSteps = 3;

  MmlEstimates est;
  est.variant = variant;
  std::vector<double> counts;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const double ll = e_step(cells, log_prob_table(p, rule, K), rule, options.threads, &counts);
    est.loglik_trace.push_back(ll);
    const Params old = p;

    if (variant == MmlVariant::rating_scale) {
      std::vector<double> alpha(p.alpha.data(), p.alpha.data() + p.alpha.size());
      parallel_for(static_cast<std::size_t>(I), options.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const double* r = &counts[i * Q * static_cast<std::size_t>(K)];
          auto eval = [&](const Eigen::VectorXd& x, bool derivs) {
            Objective obj;
            obj.grad = Eigen::VectorXd::Zero(2);
            obj.hess = Eigen::MatrixXd::Zero(2, 2);
            if (!x.allFinite()) {
              obj.value = -std::numeric_limits<double>::infinity();
              return obj;
            }
            accumulate_item(r, rule, K, x[0], x[1], alpha, Block::rating_item, derivs, obj);
            return obj;
          };
          const Eigen::Vector2d start(p.log_a[static_cast<Eigen::Index>(i)], p.b[static_cast<Eigen::Index>(i)]);
          const Eigen::VectorXd x = newton_ascent(start, eval, kNewtonSteps);
          p.log_a[static_cast<Eigen::Index>(i)] = x[0];
          p.b[static_cast<Eigen::Index>(i)] = x[1];
        }
      });
      auto eval_alpha = [&](const Eigen::VectorXd& x, bool derivs) {
        Objective obj;
        obj.grad = Eigen::VectorXd::Zero(K - 1);
        obj.hess = Eigen::MatrixXd::Zero(K - 1, K - 1);
        Eigen::MatrixXd row = x.transpose();
        if (!ordered_row(row, 0)) {
          obj.value = -std::numeric_limits<double>::infinity();
          return obj;
        }
        std::vector<double> a_row(x.data(), x.data() + x.size());
        for (int i = 0; i < I; ++i) {
          const double* r = &counts[static_cast<std::size_t>(i) * Q * static_cast<std::size_t>(K)];
          accumulate_item(r, rule, K, p.log_a[i], p.b[i], a_row, Block::shared_alpha, derivs, obj);
        }
        return obj;
      };
      const Eigen::VectorXd xa = newton_ascent(p.alpha.row(0).transpose(), eval_alpha, kNewtonSteps);
      p.alpha.row(0) = xa.transpose();
      // mean(b) = 0; shifting alpha by the same amount leaves the model unchanged.
      const double mb = p.b.mean();
      p.b.array() -= mb;
      p.alpha.array() -= mb;
    } else {
      parallel_for(static_cast<std::size_t>(I), options.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const double* r = &counts[i * Q * static_cast<std::size_t>(K)];
          auto eval = [&](const Eigen::VectorXd& x, bool derivs) {
            Objective obj;
            obj.grad = Eigen::VectorXd::Zero(K);
            obj.hess = Eigen::MatrixXd::Zero(K, K);
            Eigen::MatrixXd row = x.tail(K - 1).transpose();
            if (!std::isfinite(x[0]) || !ordered_row(row, 0)) {
              obj.value = -std::numeric_limits<double>::infinity();
              return obj;
            }
            std::vector<double> a_row(x.data() + 1, x.data() + x.size());
            accumulate_item(r, rule, K, x[0], 0.0, a_row, Block::free_item, derivs, obj);
            return obj;
          };
          const auto idx = static_cast<Eigen::Index>(i);
          Eigen::VectorXd start(K);
          start[0] = p.log_a[idx];
          start.tail(K - 1) = p.alpha.row(idx).transpose();
          const Eigen::VectorXd x = newton_ascent(start, eval, kNewtonSteps);
          p.log_a[idx] = x[0];
          p.alpha.row(idx) = x.tail(K - 1).transpose();
        }
      });
    }

    double change = (p.log_a.array().exp() - old.log_a.array().exp()).abs().maxCoeff();
    change = std::max(change, (p.alpha - old.alpha).cwiseAbs().maxCoeff());
    if (variant == MmlVariant::rating_scale) change = std::max(change, (p.b - old.b).cwiseAbs().maxCoeff());
    est.iterations = iter + 1;
    if (change < options.tolerance) {
      est.converged = true;
      break;
    }
  }

  est.loglik = e_step(cells, log_prob_table(p, rule, K), rule, options.threads, nullptr);
  est.loglik_trace.push_back(est.loglik);
  est.a = p.log_a.array().exp();
  est.thresholds = p.alpha;
  if (variant == MmlVariant::rating_scale) {
    est.b = p.b;
  } else {
    est.b = -p.alpha.rowwise().mean();
  }
  return est;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

std::vector<std::size_t> by_position(const ItemDesign& design) {
  std::vector<std::size_t> order(design.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return design.items[l].position < design.items[r].position; });
  return order;
}

}  // namespace

void write_point_estimates_csv(const MmlEstimates& est, const ItemDesign& design, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(est.a.size()) != design.size()) {
    throw ValidationError("point estimates: estimate and design item counts differ");
  }
  std::ofstream out = open_output(path);
  csv::Writer w(out);
  w.row({"item_id", "position", "negative", "a_hat", "b_hat"});
  for (std::size_t i : by_position(design)) {
    const auto& it = design.items[i];
    const auto idx = static_cast<Eigen::Index>(i);
    w.row({it.id, std::to_string(it.position), it.negative ? "1" : "0", csv::format_double(est.a[idx]),
           csv::format_double(est.b[idx])});
  }
}

void write_thresholds_csv(const MmlEstimates& est, const ItemDesign& design, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  csv::Writer w(out);
  std::vector<std::string> header = {"item_id"};
  for (Eigen::Index k = 0; k < est.thresholds.cols(); ++k) header.push_back(fmt::format("alpha[<={}]", k + 1));
  w.row(header);
  auto emit = [&](const std::string& id, Eigen::Index r) {
    std::vector<std::string> row = {id};
    for (Eigen::Index k = 0; k < est.thresholds.cols(); ++k) row.push_back(csv::format_double(est.thresholds(r, k)));
    w.row(row);
  };
  if (est.thresholds.rows() == 1) {
    emit("shared", 0);
  } else {
    for (std::size_t i : by_position(design)) emit(design.items[i].id, static_cast<Eigen::Index>(i));
  }
}

void write_loglik_trace_csv(const MmlEstimates& est, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  csv::Writer w(out);
  w.row({"iteration", "loglik"});
  for (std::size_t t = 0; t < est.loglik_trace.size(); ++t) {
    w.row({std::to_string(t), csv::format_double(est.loglik_trace[t])});
  }
}

}  // namespace eirm
