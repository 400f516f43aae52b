#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace estnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent model/config document.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class TopologyError : public Error {
 public:
  using Error::Error;
};

/// A message the protocol requires has not arrived (or is not yet readable).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// No positive beta exists for `subsystem`; `partner` is the binding neighbor.
class InfeasibleBeta : public Error {
 public:
  InfeasibleBeta(std::size_t subsystem, std::size_t partner, const std::string& what)
      : Error(what), subsystem_(subsystem), partner_(partner) {}

  std::size_t subsystem() const noexcept { return subsystem_; }
  std::size_t partner() const noexcept { return partner_; }

 private:
  std::size_t subsystem_;
  std::size_t partner_;
};

/// Gain design failed for every constraint set in the fallback chain.
class GainInfeasible : public Error {
 public:
  GainInfeasible(std::size_t subsystem, long long step, const std::string& what)
      : Error(what), subsystem_(subsystem), step_(step) {}

  std::size_t subsystem() const noexcept { return subsystem_; }
  long long step() const noexcept { return step_; }

 private:
  std::size_t subsystem_;
  long long step_;
};

/// The SDP solver stopped without a usable answer.
class SolverFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace estnet
