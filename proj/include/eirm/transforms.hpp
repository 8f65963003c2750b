#pragma once

#include <cmath>
#include <span>

#include "eirm/error.hpp"

// Maps from unconstrained reals onto constrained parameter spaces, with the
// log absolute Jacobian determinant of each map.
namespace eirm::transform {

// log(cosh(x)) without overflow.
inline double log_cosh(double x) {
  const double ax = std::abs(x);
  return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
}

// sigma = exp(u)
inline double positive(double u) { return std::exp(u); }
inline double positive_log_jacobian(double u) { return u; }
inline double positive_inverse(double sigma) {
  if (!(sigma > 0)) throw ValidationError("positive_inverse: value must be > 0");
  return std::log(sigma);
}

// rho = tanh(w), |rho| < 1
inline double correlation(double w) { return std::tanh(w); }
inline double correlation_log_jacobian(double w) { return -2.0 * log_cosh(w); }
inline double correlation_inverse(double rho) {
  if (!(std::abs(rho) < 1)) throw ValidationError("correlation_inverse: |rho| must be < 1");
  return std::atanh(rho);
}

// alpha_1 = z_1, alpha_k = alpha_{k-1} + exp(z_k).
inline void ordered(std::span<const double> z, std::span<double> alpha) {
  if (z.empty()) return;
  alpha[0] = z[0];
  for (std::size_t k = 1; k < z.size(); ++k) alpha[k] = alpha[k - 1] + std::exp(z[k]);
}

inline double ordered_log_jacobian(std::span<const double> z) {
  double s = 0.0;
  for (std::size_t k = 1; k < z.size(); ++k) s += z[k];
  return s;
}

inline void ordered_inverse(std::span<const double> alpha, std::span<double> z) {
  if (alpha.empty()) return;
  z[0] = alpha[0];
  for (std::size_t k = 1; k < alpha.size(); ++k) {
    const double gap = alpha[k] - alpha[k - 1];
    if (!(gap > 0)) throw ValidationError("ordered_inverse: cutpoints must be strictly increasing");
    z[k] = std::log(gap);
  }
}

// Chain rule through `ordered`: given d/d alpha (overwritten), produce d/dz
// including the Jacobian term.
inline void ordered_gradient(std::span<const double> z, std::span<const double> d_alpha,
                             std::span<double> d_z) {
  const std::size_t n = z.size();
  double tail = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    tail += d_alpha[k];
    d_z[k] = k == 0 ? tail : std::exp(z[k]) * tail + 1.0;
  }
}

}  // namespace eirm::transform
