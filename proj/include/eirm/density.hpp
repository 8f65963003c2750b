#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace eirm {

// A named, contiguous range of parameters.
struct ParameterBlock {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index size = 0;
};

// What the sampler needs from a target: a log density with gradient on an
// unconstrained space, and a map to the constrained values it records.
// Implementations must be safe to call concurrently.
class LogDensityModel {
 public:
  virtual ~LogDensityModel() = default;

  virtual Eigen::Index dimension() const = 0;

  // Returns log density and writes its gradient. Non-finite inputs or values
  // are reported by returning a non-finite number, never by throwing.
  virtual double log_density_gradient(const Eigen::VectorXd& z, Eigen::VectorXd& grad) const = 0;

  virtual Eigen::VectorXd constrain(const Eigen::VectorXd& z) const { return z; }

  virtual std::vector<std::string> parameter_names() const;
  virtual std::vector<ParameterBlock> blocks() const { return {}; }
};

}  // namespace eirm
