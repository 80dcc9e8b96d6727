#pragma once

#include <stdexcept>
#include <string>

namespace qv {

// Base for all library errors. The CLI maps subclasses to exit codes:
// input/validation -> 2, infeasible placement -> 3, calibration -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct PlacementError : Error {
  using Error::Error;
};

struct CalibrationError : Error {
  using Error::Error;
};

}  // namespace qv
