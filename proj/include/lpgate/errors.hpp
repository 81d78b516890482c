#pragma once

#include <stdexcept>
#include <string>

namespace lpgate {

// Invalid user input: malformed config, violated preconditions.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical procedure could not deliver its contract (no root in bracket,
// integrator step underflow, Fock-space leakage, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lpgate
