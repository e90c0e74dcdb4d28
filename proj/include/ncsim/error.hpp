#pragma once

#include <stdexcept>
#include <string>

namespace ncsim {

// Base of all library errors. The CLI maps each subclass to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: dimension mismatch, non-PSD covariance, bad scenario file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical failure: singular matrices, quadrature or root-finding breakdown,
// degenerate conditioning probabilities.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Caller violated a state-machine contract (e.g. delta=1 without a measurement).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace ncsim
