#pragma once

#include <stdexcept>
#include <string>

namespace anderson {

/// Raised for invalid inputs: bad grid parameters, dimension mismatches,
/// malformed configuration. Maps to CLI exit code 2.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot deliver its contract
/// (factorization failure, singular coefficient matrix, violated
/// convergence precondition). Maps to CLI exit code 3.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace anderson
