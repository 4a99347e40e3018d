// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace dgmoe {

// Error taxonomy shared by the library and the CLI exit-code mapping.

// Shape or size disagreement between operands.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration value or unusable parameter (bad key, k out of
// range, unsupported norm order, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A documented contract was violated by a caller or by internal state.
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Structurally valid input on which the requested quantity is undefined
// (all tokens ignored, zero-mean importance, empty sample set).
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dgmoe
