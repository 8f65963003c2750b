#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eirm/sampler.hpp"

namespace eirm {

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
  double rhat = 0.0;      // NaN when undefined
  double ess_bulk = 0.0;  // NaN when undefined
  bool constant = false;  // zero variance across all draws
};

struct SummaryTable {
  std::vector<ParameterSummary> rows;
  std::vector<std::string> warnings;
  int divergences = 0;
  int total_draws = 0;

  const ParameterSummary* find(std::string_view name) const;
};

// chains[c] holds one chain's draws of a single quantity.
using ChainDraws = std::vector<std::vector<double>>;

// Sample quantile with linear interpolation between order statistics
// (R's type 7). `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> values, double p);

// Split R-hat: each chain is halved and the potential scale reduction is
// computed over the 2m half-chains. NaN if fewer than 4 draws per chain or all
// draws are identical.
double split_rhat(const ChainDraws& chains);

// Effective sample size of the given chains (no splitting or ranking), using
// Geyer's initial monotone sequence. Capped at the total number of draws.
double ess(const ChainDraws& chains);

// Bulk ESS: rank-normalize pooled draws, split chains, then ess().
double ess_bulk(const ChainDraws& chains);

// Rank-normalized values z = Phi^-1((r - 3/8) / (S + 1/4)), average ranks
// for ties, same shape as the input.
ChainDraws rank_normalize(const ChainDraws& chains);

ChainDraws chain_draws(const PosteriorDraws& draws, std::size_t param);

SummaryTable summarize(const PosteriorDraws& draws, double rhat_threshold = 1.01,
                       double ess_threshold = 400.0);

// Header: parameter,mean,sd,q2.5,q50,q97.5,rhat,ess_bulk
void write_summary_csv(const SummaryTable& summary, const std::filesystem::path& path);

}  // namespace eirm
