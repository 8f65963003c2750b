#include "eirm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "eirm/csv.hpp"
#include "eirm/error.hpp"

namespace eirm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

ChainDraws split_chains(const ChainDraws& chains) {
  ChainDraws out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    // With an odd length the middle draw is dropped.
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

bool all_equal(const ChainDraws& chains) {
  const double first = chains.front().front();
  for (const auto& c : chains) {
    for (double x : c) {
      if (x != first) return false;
    }
  }
  return true;
}

// Autocovariance at `lag` with divisor n.
double autocovariance(std::span<const double> x, double mean, std::size_t lag) {
  double s = 0.0;
  for (std::size_t t = 0; t + lag < x.size(); ++t) s += (x[t] - mean) * (x[t + lag] - mean);
  return s / static_cast<double>(x.size());
}

}  // namespace

const ParameterSummary* SummaryTable::find(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw ValidationError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile probability must lie in [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

double split_rhat(const ChainDraws& chains) {
  if (chains.empty()) return kNaN;
  for (const auto& c : chains) {
    if (c.size() < 4 || c.size() != chains.front().size()) return kNaN;
  }
  if (all_equal(chains)) return kNaN;
  const ChainDraws split = split_chains(chains);
  const double n = static_cast<double>(split.front().size());
  std::vector<double> means, vars;
  for (const auto& c : split) {
    means.push_back(mean_of(c));
    vars.push_back(variance_of(c));
  }
  const double w = mean_of(vars);
  const double b = n * variance_of(means);
  if (!(w > 0.0)) return std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double ess(const ChainDraws& chains) {
  if (chains.empty()) return kNaN;
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) return kNaN;
  }
  if (n < 4 || all_equal(chains)) return kNaN;
  const std::size_t m = chains.size();
  std::vector<double> means(m), acov0(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    acov0[c] = autocovariance(chains[c], means[c], 0);
  }
  const double nd = static_cast<double>(n);
  const double mean_var = mean_of(acov0) * nd / (nd - 1.0);
  double var_plus = mean_var * (nd - 1.0) / nd;
  if (m > 1) var_plus += variance_of(means);
  if (!(var_plus > 0.0)) return kNaN;

  auto acov_mean = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += autocovariance(chains[c], means[c], lag);
    return s / static_cast<double>(m);
  };

  const long len = static_cast<long>(n);
  std::vector<double> rho(n, 0.0);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - acov_mean(1)) / var_plus;
  rho[1] = rho_odd;
  long s = 0;
  while (s < len - 5 && rho_even + rho_odd > 0.0) {
    s += 2;
    rho_even = 1.0 - (mean_var - acov_mean(static_cast<std::size_t>(s))) / var_plus;
    rho_odd = 1.0 - (mean_var - acov_mean(static_cast<std::size_t>(s + 1))) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[s] = rho_even;
      rho[s + 1] = rho_odd;
    }
  }
  const long max_s = s;
  if (rho_even > 0.0) rho[max_s + 1] = rho_even;

  // Initial monotone sequence on pair sums.
  for (long t = 1; t <= max_s - 3; t += 2) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
      rho[t + 2] = rho[t + 1];
    }
  }

  const double total = static_cast<double>(m) * nd;
  double tau = -1.0 + rho[max_s + 1];
  for (long t = 0; t < max_s; ++t) tau += 2.0 * rho[t];
  tau = std::max(tau, 1.0 / std::log10(total));
  return std::min(total / tau, total);
}

ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t i = 0; i < chains[c].size(); ++i) pooled.push_back({chains[c][i], pooled.size()});
  }
  std::sort(pooled.begin(), pooled.end());
  const double total = static_cast<double>(pooled.size());
  std::vector<double> z(pooled.size());
  const boost::math::normal_distribution<double> normal;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    const double value = boost::math::quantile(normal, (rank - 0.375) / (total + 0.25));
    for (std::size_t k = i; k < j; ++k) z[pooled[k].second] = value;
    i = j;
  }
  ChainDraws out(chains.size());
  std::size_t pos = 0;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    out[c].assign(z.begin() + static_cast<std::ptrdiff_t>(pos),
                  z.begin() + static_cast<std::ptrdiff_t>(pos + chains[c].size()));
    pos += chains[c].size();
  }
  return out;
}

double ess_bulk(const ChainDraws& chains) {
  if (chains.empty() || chains.front().size() < 4 || all_equal(chains)) return kNaN;
  return ess(split_chains(rank_normalize(chains)));
}

ChainDraws chain_draws(const PosteriorDraws& draws, std::size_t param) {
  ChainDraws out(static_cast<std::size_t>(draws.n_chains));
  for (int c = 0; c < draws.n_chains; ++c) {
    out[c].reserve(static_cast<std::size_t>(draws.n_samples));
    for (int i = 0; i < draws.n_samples; ++i) out[c].push_back(draws.value(c, i, param));
  }
  return out;
}

SummaryTable summarize(const PosteriorDraws& draws, double rhat_threshold, double ess_threshold) {
  SummaryTable out;
  out.divergences = draws.divergences();
  out.total_draws = draws.n_chains * draws.n_samples;
  if (out.total_draws == 0) throw ValidationError("summarize: no draws");
  if (out.divergences > 0) {
    out.warnings.push_back(fmt::format("{} divergent transitions after warmup", out.divergences));
  }
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    const ChainDraws chains = chain_draws(draws, p);
    std::vector<double> pooled;
    pooled.reserve(static_cast<std::size_t>(out.total_draws));
    for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());

    ParameterSummary row;
    row.name = draws.names[p];
    row.mean = mean_of(pooled);
    row.sd = std::sqrt(variance_of(pooled));
    std::sort(pooled.begin(), pooled.end());
    row.q025 = quantile_sorted(pooled, 0.025);
    row.q50 = quantile_sorted(pooled, 0.5);
    row.q975 = quantile_sorted(pooled, 0.975);
    row.constant = pooled.front() == pooled.back();
    if (row.constant) {
      row.rhat = kNaN;
      row.ess_bulk = kNaN;
      out.warnings.push_back(fmt::format("{}: constant across all draws; R-hat and ESS undefined", row.name));
    } else {
      row.rhat = draws.n_chains >= 2 ? split_rhat(chains) : kNaN;
      row.ess_bulk = ess_bulk(chains);
      if (row.rhat > rhat_threshold) {
        out.warnings.push_back(fmt::format("{}: R-hat {:.4f} exceeds {}", row.name, row.rhat, rhat_threshold));
      }
      if (row.ess_bulk < ess_threshold) {
        out.warnings.push_back(fmt::format("{}: bulk ESS {:.1f} below {}", row.name, row.ess_bulk, ess_threshold));
      }
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

void write_summary_csv(const SummaryTable& summary, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write '{}'", path.string()));
  csv::Writer w(out);
  w.row({"parameter", "mean", "sd", "q2.5", "q50", "q97.5", "rhat", "ess_bulk"});
  for (const auto& r : summary.rows) {
    w.row({r.name, csv::format_double(r.mean), csv::format_double(r.sd), csv::format_double(r.q025),
           csv::format_double(r.q50), csv::format_double(r.q975), csv::format_double(r.rhat),
           csv::format_double(r.ess_bulk)});
  }
}

}  // namespace eirm
