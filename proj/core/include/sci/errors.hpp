#pragma once

#include <stdexcept>
#include <string>

namespace sci {

// Error taxonomy mirrored by the CLI exit codes (see tools/).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sci
