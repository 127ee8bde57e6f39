#pragma once

#include <stdexcept>
#include <string>

namespace protogate {

/// Bad user-supplied configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Missing or malformed files, including data files that violate the
/// documented formats (CLI exit code 3).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values encountered during numeric work (CLI exit code 4).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace protogate
