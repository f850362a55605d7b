#pragma once

#include <stdexcept>
#include <string>

namespace qtraj {

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidConfiguration : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnsupportedConfiguration : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Probability mass escaped the top of the truncated number basis.
struct TruncationOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalDegeneracy : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct QuadratureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace qtraj
