#include "eirm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include <fmt/format.h>

#include "eirm/error.hpp"
#include "eirm/parallel.hpp"

namespace eirm {

void SamplerConfig::validate() const {
  if (n_chains < 1 || n_warmup < 1 || n_samples < 1) {
    throw ValidationError("sampler: n_chains, n_warmup and n_samples must all be >= 1");
  }
  if (!(target_accept > 0 && target_accept < 1)) {
    throw ValidationError("sampler: target_accept must lie in (0, 1)");
  }
  if (max_depth < 1 || max_depth > 20) throw ValidationError("sampler: max_depth must lie in [1, 20]");
  if (!(init_radius > 0)) throw ValidationError("sampler: init_radius must be > 0");
  if (!(max_energy_error > 0)) throw ValidationError("sampler: max_energy_error must be > 0");
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) {
  SamplerConfig c;
  try {
    c.n_chains = j.value("n_chains", c.n_chains);
    c.n_warmup = j.value("n_warmup", c.n_warmup);
    c.n_samples = j.value("n_samples", c.n_samples);
    c.target_accept = j.value("target_accept", c.target_accept);
    c.max_depth = j.value("max_depth", c.max_depth);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    c.init_radius = j.value("init_radius", c.init_radius);
    c.max_energy_error = j.value("max_energy_error", c.max_energy_error);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("sampler config: {}", e.what()));
  }
  c.validate();
  return c;
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"n_chains", n_chains},       {"n_warmup", n_warmup},
          {"n_samples", n_samples},     {"target_accept", target_accept},
          {"max_depth", max_depth},     {"seed", seed},
          {"threads", threads},         {"init_radius", init_radius},
          {"max_energy_error", max_energy_error}};
}

std::vector<double> PosteriorDraws::parameter(std::size_t param) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_chains) * n_samples);
  for (int c = 0; c < n_chains; ++c) {
    for (int i = 0; i < n_samples; ++i) out.push_back(value(c, i, param));
  }
  return out;
}

int PosteriorDraws::find(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

const ParameterBlock* PosteriorDraws::block(std::string_view name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

int PosteriorDraws::divergences() const {
  return static_cast<int>(std::count_if(info.begin(), info.end(), [](const auto& t) { return t.divergent; }));
}

double leapfrog(const LogDensityModel& model, const Eigen::VectorXd& inv_metric, double step,
                Eigen::VectorXd& z, Eigen::VectorXd& p, Eigen::VectorXd& grad) {
  p.noalias() += 0.5 * step * grad;
  z.noalias() += step * inv_metric.cwiseProduct(p);
  const double logp = model.log_density_gradient(z, grad);
  p.noalias() += 0.5 * step * grad;
  return logp;
}

namespace {

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PhasePoint {
  Eigen::VectorXd z;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double logp = 0.0;
};

// Dual averaging of log step size toward a target acceptance statistic.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double target) : target_(target) {}

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (target_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(counter_) / gamma_;
    const double x_eta = std::pow(counter_, -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step() const { return std::exp(x_bar_); }

 private:
  double target_;
  double mu_ = 0.0;
  double counter_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  static constexpr double gamma_ = 0.05;
  static constexpr double t0_ = 10.0;
  static constexpr double kappa_ = 0.75;
};

// Windowed diagonal-metric estimation: an initial fast buffer, doubling slow
// windows, and a terminal fast buffer.
class MetricAdapter {
 public:
  MetricAdapter(int n_warmup, Eigen::Index dim) : n_warmup_(n_warmup), mean_(Eigen::VectorXd::Zero(dim)),
                                                  m2_(Eigen::VectorXd::Zero(dim)) {
    if (n_warmup < 20) {
      enabled_ = false;
      return;
    }
    init_buffer_ = 75;
    term_buffer_ = 50;
    window_ = 25;
    if (init_buffer_ + term_buffer_ + window_ > n_warmup) {
      init_buffer_ = static_cast<int>(0.15 * n_warmup);
      term_buffer_ = static_cast<int>(0.1 * n_warmup);
      window_ = n_warmup - (init_buffer_ + term_buffer_);
    }
    next_window_ = init_buffer_ + window_ - 1;
  }

  // Returns true when a window closed and `inv_metric` was updated.
  bool learn(const Eigen::VectorXd& z, Eigen::VectorXd& inv_metric) {
    if (!enabled_) return false;
    if (in_window()) {
      ++n_;
      const Eigen::VectorXd delta = z - mean_;
      mean_ += delta / static_cast<double>(n_);
      m2_ += delta.cwiseProduct(z - mean_);
    }
    if (counter_ == next_window_ && counter_ != n_warmup_) {
      compute_next_window();
      const double n = static_cast<double>(n_);
      Eigen::VectorXd var = m2_ / std::max(n - 1.0, 1.0);
      inv_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
      n_ = 0;
      mean_.setZero();
      m2_.setZero();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < n_warmup_ - term_buffer_ && counter_ != n_warmup_;
  }

  void compute_next_window() {
    if (next_window_ == n_warmup_ - term_buffer_ - 1) return;
    window_ *= 2;
    next_window_ = counter_ + window_;
    if (next_window_ != n_warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_ + 2 * window_;
      if (boundary >= n_warmup_ - term_buffer_ - 1) next_window_ = n_warmup_ - term_buffer_ - 1;
    }
  }

  bool enabled_ = true;
  int n_warmup_;
  int init_buffer_ = 0, term_buffer_ = 0, window_ = 0, next_window_ = 0;
  int counter_ = 0;
  long n_ = 0;
  Eigen::VectorXd mean_, m2_;
};

// Multinomial no-U-turn transitions with the generalized termination
// criterion checked across every merged subtree boundary.
class NutsChain {
 public:
  NutsChain(const LogDensityModel& model, const SamplerConfig& config, Rng& rng)
      : model_(model), config_(config), rng_(rng),
        inv_metric_(Eigen::VectorXd::Ones(model.dimension())) {}

  double step() const { return step_; }
  void set_step(double s) { step_ = s; }
  Eigen::VectorXd& inv_metric() { return inv_metric_; }

  double hamiltonian(const PhasePoint& pt) const {
    return -pt.logp + 0.5 * pt.p.dot(inv_metric_.cwiseProduct(pt.p));
  }

  void sample_momentum(PhasePoint& pt) {
    for (Eigen::Index i = 0; i < pt.p.size(); ++i) pt.p[i] = normal_(rng_) / std::sqrt(inv_metric_[i]);
  }

  // Heuristic initial step: double or halve until a single leapfrog step's
  // acceptance crosses 0.8.
  void init_step_size(const PhasePoint& start) {
    const double log_target = std::log(0.8);
    PhasePoint pt = start;
    sample_momentum(pt);
    double h0 = hamiltonian(pt);
    PhasePoint trial = pt;
    trial.logp = leapfrog(model_, inv_metric_, step_, trial.z, trial.p, trial.grad);
    double h = hamiltonian(trial);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    const int direction = (h0 - h) > log_target ? 1 : -1;
    for (int iter = 0; iter < 200; ++iter) {
      PhasePoint p2 = start;
      sample_momentum(p2);
      h0 = hamiltonian(p2);
      p2.logp = leapfrog(model_, inv_metric_, step_, p2.z, p2.p, p2.grad);
      h = hamiltonian(p2);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      const double delta = h0 - h;
      if (direction == 1 && !(delta > log_target)) break;
      if (direction == -1 && !(delta < log_target)) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7) throw NumericalError("step size search diverged to infinity; posterior may be improper");
      if (step_ == 0) throw NumericalError("step size search collapsed to zero; density is not smooth");
    }
  }

  TransitionInfo transition(PhasePoint& current) {
    PhasePoint pt = current;
    sample_momentum(pt);
    const double h0 = hamiltonian(pt);

    PhasePoint fwd = pt, bck = pt;
    Eigen::VectorXd z_sample = pt.z;
    double logp_sample = pt.logp;
    Eigen::VectorXd grad_sample = pt.grad;
    Eigen::VectorXd z_propose = pt.z;
    double logp_propose = pt.logp;
    Eigen::VectorXd grad_propose = pt.grad;

    Eigen::VectorXd p_fwd_fwd = pt.p, p_sharp_fwd_fwd = inv_metric_.cwiseProduct(pt.p);
    Eigen::VectorXd p_fwd_bck = pt.p, p_sharp_fwd_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_fwd = pt.p, p_sharp_bck_fwd = p_sharp_fwd_fwd;
    Eigen::VectorXd p_bck_bck = pt.p, p_sharp_bck_bck = p_sharp_fwd_fwd;
    Eigen::VectorXd rho = pt.p;

    double log_sum_weight = 0.0;
    int depth = 0;
    n_leapfrog_ = 0;
    sum_metro_prob_ = 0.0;
    divergent_ = false;
    const Eigen::Index dim = pt.z.size();

    while (depth < config_.max_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd rho_bck = Eigen::VectorXd::Zero(dim);
      bool valid_subtree;
      double log_sum_weight_subtree = -std::numeric_limits<double>::infinity();

      if (uniform_(rng_) > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_bck;
        p_sharp_bck_fwd = p_sharp_fwd_bck;
        valid_subtree = build_tree(depth, fwd, 1.0, h0, z_propose, logp_propose, grad_propose, p_sharp_fwd_bck,
                                   p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd, log_sum_weight_subtree);
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_fwd;
        p_sharp_fwd_bck = p_sharp_bck_fwd;
        valid_subtree = build_tree(depth, bck, -1.0, h0, z_propose, logp_propose, grad_propose, p_sharp_bck_fwd,
                                   p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck, log_sum_weight_subtree);
      }
      if (!valid_subtree) break;
      ++depth;

      if (log_sum_weight_subtree > log_sum_weight) {
        z_sample = z_propose;
        logp_sample = logp_propose;
        grad_sample = grad_propose;
      } else {
        const double accept = std::exp(log_sum_weight_subtree - log_sum_weight);
        if (uniform_(rng_) < accept) {
          z_sample = z_propose;
          logp_sample = logp_propose;
          grad_sample = grad_propose;
        }
      }
      log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      Eigen::VectorXd rho_extended = rho_bck + p_fwd_bck;
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_extended);
      rho_extended = rho_fwd + p_bck_fwd;
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_extended);
      if (!persist) break;
    }

    current.z = z_sample;
    current.logp = logp_sample;
    current.grad = grad_sample;

    TransitionInfo info;
    info.divergent = divergent_;
    info.n_leapfrog = n_leapfrog_;
    info.tree_depth = depth;
    info.accept_stat = n_leapfrog_ > 0 ? sum_metro_prob_ / n_leapfrog_ : 0.0;
    info.step_size = step_;
    // Energy of the selected state with its (unrecorded) momentum replaced by
    // the expected kinetic energy is not meaningful; report potential + kinetic
    // at the start of the trajectory, as is conventional.
    info.energy = h0;
    return info;
  }

 private:
  static bool criterion(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
  }

  bool build_tree(int depth, PhasePoint& pt, double sign, double h0, Eigen::VectorXd& z_propose,
                  double& logp_propose, Eigen::VectorXd& grad_propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
                  Eigen::VectorXd& p_end, double& log_sum_weight) {
    if (depth == 0) {
      pt.logp = leapfrog(model_, inv_metric_, sign * step_, pt.z, pt.p, pt.grad);
      ++n_leapfrog_;
      double h = hamiltonian(pt);
      if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
      if (h - h0 > config_.max_energy_error) divergent_ = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob_ += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = pt.z;
      logp_propose = pt.logp;
      grad_propose = pt.grad;
      p_sharp_beg = inv_metric_.cwiseProduct(pt.p);
      p_sharp_end = p_sharp_beg;
      rho += pt.p;
      p_beg = pt.p;
      p_end = p_beg;
      return !divergent_;
    }

    const Eigen::Index dim = pt.z.size();
    double log_sum_weight_init = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_init_end(dim), p_sharp_init_end(dim);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, pt, sign, h0, z_propose, logp_propose, grad_propose, p_sharp_beg,
                    p_sharp_init_end, rho_init, p_beg, p_init_end, log_sum_weight_init)) {
      return false;
    }

    Eigen::VectorXd z_propose_final = pt.z;
    double logp_propose_final = pt.logp;
    Eigen::VectorXd grad_propose_final = pt.grad;
    double log_sum_weight_final = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd p_final_beg(dim), p_sharp_final_beg(dim);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim);
    if (!build_tree(depth - 1, pt, sign, h0, z_propose_final, logp_propose_final, grad_propose_final,
                    p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, log_sum_weight_final)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    bool take_final;
    if (log_sum_weight_final > log_sum_weight_subtree) {
      take_final = true;
    } else {
      take_final = uniform_(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree);
    }
    if (take_final) {
      z_propose = std::move(z_propose_final);
      logp_propose = logp_propose_final;
      grad_propose = std::move(grad_propose_final);
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    Eigen::VectorXd rho_extended = rho_init + p_final_beg;
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_extended);
    rho_extended = rho_final + p_init_end;
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_extended);
    return persist;
  }

  const LogDensityModel& model_;
  const SamplerConfig& config_;
  Rng& rng_;
  Eigen::VectorXd inv_metric_;
  double step_ = 1.0;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  int n_leapfrog_ = 0;
  double sum_metro_prob_ = 0.0;
  bool divergent_ = false;
};

struct ChainResult {
  std::vector<double> values;
  std::vector<TransitionInfo> info;
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
};

PhasePoint initialize(const LogDensityModel& model, const SamplerConfig& config, Rng& rng, int chain) {
  std::uniform_real_distribution<double> init(-config.init_radius, config.init_radius);
  PhasePoint pt;
  const Eigen::Index dim = model.dimension();
  pt.p = Eigen::VectorXd::Zero(dim);
  for (int attempt = 0; attempt < 100; ++attempt) {
    pt.z.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) pt.z[i] = init(rng);
    pt.logp = model.log_density_gradient(pt.z, pt.grad);
    if (std::isfinite(pt.logp) && pt.grad.size() == dim && pt.grad.allFinite()) return pt;
  }
  throw NumericalError(
      fmt::format("chain {}: log density not finite at 100 random initializations", chain));
}

ChainResult run_chain(const LogDensityModel& model, const SamplerConfig& config, int chain) {
  Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(chain));
  PhasePoint current = initialize(model, config, rng, chain);
  NutsChain nuts(model, config, rng);
  StepSizeAdapter step_adapter(config.target_accept);
  MetricAdapter metric_adapter(config.n_warmup, model.dimension());

  nuts.init_step_size(current);
  step_adapter.restart(nuts.step());
  for (int it = 0; it < config.n_warmup; ++it) {
    const TransitionInfo info = nuts.transition(current);
    nuts.set_step(step_adapter.learn(info.accept_stat));
    if (metric_adapter.learn(current.z, nuts.inv_metric())) {
      nuts.init_step_size(current);
      step_adapter.restart(nuts.step());
    }
  }
  nuts.set_step(step_adapter.final_step());

  ChainResult out;
  const std::size_t n_params = static_cast<std::size_t>(model.dimension());
  out.values.reserve(static_cast<std::size_t>(config.n_samples) * n_params);
  out.info.reserve(static_cast<std::size_t>(config.n_samples));
  for (int it = 0; it < config.n_samples; ++it) {
    out.info.push_back(nuts.transition(current));
    const Eigen::VectorXd constrained = model.constrain(current.z);
    out.values.insert(out.values.end(), constrained.data(), constrained.data() + constrained.size());
  }
  out.step_size = nuts.step();
  out.inv_metric = nuts.inv_metric();
  return out;
}

}  // namespace

PosteriorDraws run_mcmc(const LogDensityModel& model, const SamplerConfig& config) {
  config.validate();
  if (model.dimension() < 1) throw ValidationError("run_mcmc: posterior dimension must be >= 1");

  std::vector<ChainResult> chains(static_cast<std::size_t>(config.n_chains));
  parallel_for(chains.size(), config.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) chains[c] = run_chain(model, config, static_cast<int>(c));
  });

  PosteriorDraws draws;
  draws.n_chains = config.n_chains;
  draws.n_samples = config.n_samples;
  draws.names = model.parameter_names();
  draws.blocks = model.blocks();
  for (auto& ch : chains) {
    draws.values.insert(draws.values.end(), ch.values.begin(), ch.values.end());
    draws.info.insert(draws.info.end(), ch.info.begin(), ch.info.end());
    draws.step_size.push_back(ch.step_size);
    draws.inv_metric.push_back(std::move(ch.inv_metric));
  }
  return draws;
}

StaticHmcResult run_static_hmc(const LogDensityModel& model, const Eigen::VectorXd& init, double step,
                               int n_steps, int n_iterations, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const Eigen::VectorXd inv_metric = Eigen::VectorXd::Ones(model.dimension());
  Eigen::VectorXd z = init, grad;
  double logp = model.log_density_gradient(z, grad);
  StaticHmcResult out;
  for (int it = 0; it < n_iterations; ++it) {
    Eigen::VectorXd p(z.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = normal(rng);
    const double h0 = -logp + 0.5 * p.squaredNorm();
    Eigen::VectorXd z_new = z, grad_new = grad;
    double logp_new = logp;
    for (int s = 0; s < n_steps; ++s) logp_new = leapfrog(model, inv_metric, step, z_new, p, grad_new);
    const double h1 = -logp_new + 0.5 * p.squaredNorm();
    const double accept = std::isfinite(h1) ? std::min(1.0, std::exp(h0 - h1)) : 0.0;
    out.accept_prob.push_back(accept);
    if (uniform(rng) < accept) {
      z = std::move(z_new);
      grad = std::move(grad_new);
      logp = logp_new;
    }
    out.draws.push_back(z);
  }
  return out;
}

}  // namespace eirm
