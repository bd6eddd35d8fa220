#pragma once

#include <stdexcept>
#include <string>

namespace ele {

/// Root of every error this library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented invariant (graph structure, label range, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// More real nodes than the padded size allows.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes are incompatible for a primitive.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's contract (non-scalar root, non-unit input, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An embedding vector had zero norm before normalization.
class DegenerateEmbeddingError : public Error {
 public:
  using Error::Error;
};

/// Loss became non-finite during optimization.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

/// PGD produced a non-finite gradient.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, long iteration) : Error(what), iteration_(iteration) {}
  long iteration() const noexcept { return iteration_; }

 private:
  long iteration_;
};

/// Bad user input (unknown token, overlength string, malformed file).
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace ele
