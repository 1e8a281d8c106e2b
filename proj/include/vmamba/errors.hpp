#pragma once

#include <stdexcept>
#include <string>

namespace vmamba {

// Shapes that do not agree with an operation's contract.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Invalid model, layer, or run configuration.
class ConfigurationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (e.g. delta <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller violated a usage precondition (non-scalar loss, LTI-only routine, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A forward computation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Frame or checkpoint files that cannot be read or are inconsistent.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vmamba
