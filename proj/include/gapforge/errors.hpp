#pragma once

#include <stdexcept>
#include <string>

namespace gapforge {

// Error taxonomy mirrors the CLI exit codes: ConfigError -> 1,
// NumericError -> 2, IoError -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace gapforge
