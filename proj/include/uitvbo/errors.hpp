#pragma once

#include <stdexcept>
#include <string>

namespace uitvbo {

// Caller broke a documented precondition (dimension mismatch, bad parameter range, ...).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

// Linear algebra or an iterative solver failed even after the jitter / iteration budget.
class NumericalFailure : public std::runtime_error {
 public:
  explicit NumericalFailure(const std::string& what) : std::runtime_error(what) {}
};

class DegenerateData : public std::runtime_error {
 public:
  explicit DegenerateData(const std::string& what) : std::runtime_error(what) {}
};

class BudgetExceeded : public std::runtime_error {
 public:
  explicit BudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

class ConfigurationError : public std::runtime_error {
 public:
  explicit ConfigurationError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void require(bool condition, const char* message) {
  if (!condition) throw ContractViolation(message);
}
}  // namespace detail

}  // namespace uitvbo
