#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "eirm/density.hpp"
#include "eirm/rng.hpp"

namespace eirm {

struct SamplerConfig {
  int n_chains = 4;
  int n_warmup = 1000;
  int n_samples = 1000;
  double target_accept = 0.9;
  int max_depth = 10;  // at most 2^max_depth leapfrog steps per transition
  std::uint64_t seed = 1;
  int threads = 1;     // chains run concurrently up to this many workers
  double init_radius = 1.0;  // initial z ~ uniform(-r, r)
  double max_energy_error = 1000.0;

  void validate() const;
  static SamplerConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct TransitionInfo {
  bool divergent = false;
  int n_leapfrog = 0;
  int tree_depth = 0;
  double energy = 0.0;
  double accept_stat = 0.0;
  double step_size = 0.0;
};

// Post-warmup draws of constrained values, indexed [chain][iteration][param].
struct PosteriorDraws {
  int n_chains = 0;
  int n_samples = 0;
  std::vector<std::string> names;
  std::vector<ParameterBlock> blocks;
  std::vector<double> values;
  std::vector<TransitionInfo> info;  // [chain][iteration]
  std::vector<double> step_size;     // per chain, after adaptation
  std::vector<Eigen::VectorXd> inv_metric;  // per chain

  std::size_t n_params() const { return names.size(); }
  double value(int chain, int iter, std::size_t param) const {
    return values[(static_cast<std::size_t>(chain) * n_samples + iter) * n_params() + param];
  }
  std::span<const double> draw(int chain, int iter) const {
    return std::span<const double>(values).subspan(
        (static_cast<std::size_t>(chain) * n_samples + iter) * n_params(), n_params());
  }
  // All draws of one parameter, chain-major.
  std::vector<double> parameter(std::size_t param) const;
  // Index of a named parameter, or -1.
  int find(std::string_view name) const;
  const ParameterBlock* block(std::string_view name) const;
  int divergences() const;
};

PosteriorDraws run_mcmc(const LogDensityModel& model, const SamplerConfig& config);

// One leapfrog step with diagonal inverse metric; updates z, p, grad in place
// and returns the new log density.
double leapfrog(const LogDensityModel& model, const Eigen::VectorXd& inv_metric, double step,
                Eigen::VectorXd& z, Eigen::VectorXd& p, Eigen::VectorXd& grad);

// Fixed-length HMC with Metropolis correction, for checking the integrator
// against analytic acceptance behavior.
struct StaticHmcResult {
  std::vector<double> accept_prob;  // min(1, exp(-dH)) per transition
  std::vector<Eigen::VectorXd> draws;
};
StaticHmcResult run_static_hmc(const LogDensityModel& model, const Eigen::VectorXd& init, double step,
                               int n_steps, int n_iterations, std::uint64_t seed);

}  // namespace eirm
