#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "eirm/csv.hpp"
#include "eirm/data.hpp"
#include "eirm/density.hpp"
#include "eirm/model_spec.hpp"
#include "eirm/posterior.hpp"
#include "eirm/rng.hpp"
#include "eirm/simulate.hpp"

namespace testing {

inline std::filesystem::path oracle_dir() { return EIRM_ORACLE_DIR; }
inline std::string cli_path() { return EIRM_CLI_PATH; }

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline eirm::csv::Table parse_csv(const std::string& text) {
  std::istringstream in(text);
  return eirm::csv::parse(in, "test");
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("eirm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Small simulated survey for a family, with framing covariates.
inline eirm::SimConfig small_config(eirm::Family family, int persons, int items, std::uint64_t seed) {
  eirm::SimConfig c;
  c.family = family;
  c.n_persons = persons;
  c.n_items = items;
  c.seed = seed;
  if (eirm::is_graded(family)) {
    c.n_categories = 4;
    c.alpha = {-1.5, -0.2, 1.1};
    c.beta = {0.6};
  } else {
    c.n_categories = 2;
    c.alpha = {};
    c.beta = {0.2, -0.5};
  }
  c.gamma = family == eirm::Family::one_pl ? std::vector<double>{} : std::vector<double>{0.2, -0.3};
  return c;
}

inline eirm::ModelSpec framing_spec(eirm::Family family,
                                    eirm::Parameterization p = eirm::Parameterization::noncentered) {
  eirm::ModelSpec spec;
  spec.family = family;
  spec.parameterization = p;
  if (spec.has_location_effects()) spec.location_covariates = {"negative"};
  if (spec.has_disc_effects()) spec.disc_covariates = {"negative"};
  return spec;
}

inline Eigen::VectorXd uniform_point(Eigen::Index n, double radius, eirm::Rng& rng) {
  std::uniform_real_distribution<double> u(-radius, radius);
  Eigen::VectorXd z(n);
  for (Eigen::Index k = 0; k < n; ++k) z[k] = u(rng);
  return z;
}

// Central differences of log_density_gradient's value.
inline Eigen::VectorXd fd_gradient(const eirm::LogDensityModel& m, const Eigen::VectorXd& z, double h = 1e-5) {
  Eigen::VectorXd g(z.size()), scratch;
  Eigen::VectorXd x = z;
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    x[k] = z[k] + h;
    const double up = m.log_density_gradient(x, scratch);
    x[k] = z[k] - h;
    const double down = m.log_density_gradient(x, scratch);
    x[k] = z[k];
    g[k] = (up - down) / (2 * h);
  }
  return g;
}

// max_k |g - fd| / max(1, |fd|)
inline double gradient_error(const Eigen::VectorXd& g, const Eigen::VectorXd& fd) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    worst = std::max(worst, std::abs(g[k] - fd[k]) / std::max(1.0, std::abs(fd[k])));
  }
  return worst;
}

// Gaussian target with diagonal or dense precision.
class GaussianTarget final : public eirm::LogDensityModel {
 public:
  GaussianTarget(Eigen::VectorXd mean, Eigen::MatrixXd cov)
      : mean_(std::move(mean)), precision_(cov.inverse()) {}
  Eigen::Index dimension() const override { return mean_.size(); }
  double log_density_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const override {
    const Eigen::VectorXd d = z - mean_;
    grad = -precision_ * d;
    return -0.5 * d.dot(precision_ * d);
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd precision_;
};

inline int run_command(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

}  // namespace testing
