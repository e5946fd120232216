#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nphmm {

// Caller violated a documented precondition (bad argument, malformed config).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation could not produce a finite, well-defined result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The constraint set of a model is empty (e.g. K * sigma_minus > 1).
class InfeasibleConstraintError : public UsageError {
 public:
  using UsageError::UsageError;
};

// The likelihood collapsed to -inf at some observation.
class DegenerateFitError : public NumericalError {
 public:
  DegenerateFitError(const std::string& what, std::size_t step)
      : NumericalError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Every restart of a fit failed; diagnostics holds one line per restart.
class FitFailureError : public NumericalError {
 public:
  FitFailureError(const std::string& what, std::vector<std::string> diagnostics)
      : NumericalError(what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

// Every model of a selection grid failed to fit.
class SelectionError : public NumericalError {
 public:
  SelectionError(const std::string& what, std::vector<std::string> diagnostics)
      : NumericalError(what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

// A Monte-Carlo summand was not finite.
class EstimationError : public NumericalError {
 public:
  EstimationError(const std::string& what, std::size_t step)
      : NumericalError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nphmm
