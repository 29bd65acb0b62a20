#pragma once

#include <stdexcept>
#include <string>

namespace leancnn {

// Base of every error the engine throws. The category names map onto CLI
// exit codes (see tools/leancnn.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor geometry does not conform to what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Element count does not fit in std::size_t.
class SizeError : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

// Invalid hyperparameter, model spec or option combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data that violates a contract (non-binary target, label out of range).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Missing, unreadable or undecodable dataset content.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint or artifact file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, double last_finite_loss)
      : Error(what), epoch_(epoch), last_finite_loss_(last_finite_loss) {}

  int epoch() const noexcept { return epoch_; }
  double last_finite_loss() const noexcept { return last_finite_loss_; }

 private:
  int epoch_;
  double last_finite_loss_;
};

}  // namespace leancnn
