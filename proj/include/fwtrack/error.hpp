#pragma once

#include <stdexcept>
#include <string>

namespace fwtrack {

/// Raised on contract violations: dimension mismatches, infeasible inputs,
/// malformed files.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fwtrack
