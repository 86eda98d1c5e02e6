#pragma once

#include <stdexcept>
#include <string>

namespace mixedsde {

/// Invalid or incomplete run configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or mismatched input data (CLI exit code 3).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure: solver breakdown, overflow, non-finite state (CLI exit code 4).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// All V_i vanish: the panel carries no information about the effect mean.
struct NoInformationError : NumericalError {
    explicit NoInformationError(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace mixedsde
