#pragma once

#include <stdexcept>
#include <string>

namespace eirm {

// Bad input: malformed files, out-of-range values, inconsistent specs.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite densities, singular systems, failed initialization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eirm
