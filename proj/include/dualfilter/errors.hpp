#pragma once

#include <stdexcept>
#include <string>

namespace dualfilter {

/// Raised when an iteration leaves its numerically valid regime
/// (mass underflow, covariance losing definiteness, ...). `index` is the
/// grid step or path index at which the failure was detected.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, long index)
      : std::runtime_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  long index() const noexcept { return index_; }

 private:
  long index_;
};

}  // namespace dualfilter
