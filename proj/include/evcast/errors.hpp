#pragma once

#include <stdexcept>
#include <string>

namespace evcast {

/// Bad flags, missing seed, unresolved paths. CLI exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed inputs, schema mismatches, contract violations on data. Exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Optimizer non-convergence, degenerate numerics. Exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace evcast
