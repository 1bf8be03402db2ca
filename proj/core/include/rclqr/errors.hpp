#pragma once

#include <stdexcept>
#include <string>

namespace rclqr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes, out-of-domain parameters, violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A closed loop with spectral radius >= 1, or a trajectory that blew up.
class InstabilityError : public Error {
 public:
  using Error::Error;
};

// Iterative routine ran out of budget or produced non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace rclqr
