#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace esp {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layer sizes empty, too short, or containing zero widths.
class ArchitectureError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class NonDifferentiableError : public Error {
 public:
  using Error::Error;
};

class DivergedTrainingError : public Error {
 public:
  DivergedTrainingError(std::size_t epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Operation not legal in the current state (stepping a finished episode,
// predicting with an unfitted model, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace esp
