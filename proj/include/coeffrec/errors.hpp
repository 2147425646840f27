#pragma once

#include <stdexcept>
#include <string>

namespace coeffrec {

/// Raised when an iterative or direct solve cannot meet its contract.
class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, double residual = -1.0, long step = -1)
      : std::runtime_error(what), residual_(residual), step_(step) {}

  /// Relative residual at abort, or -1 when not applicable.
  double residual() const { return residual_; }
  /// Time step at which a marching solve failed, or -1.
  long step() const { return step_; }

 private:
  double residual_;
  long step_;
};

/// Raised when training produces a non-finite loss.
class Divergence : public std::runtime_error {
 public:
  Divergence(const std::string& what, long iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

}  // namespace coeffrec
