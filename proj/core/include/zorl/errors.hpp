#pragma once

#include <stdexcept>
#include <string>

namespace zorl {

/// Bad experiment configuration / CLI usage. Maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or missing data files (LIBSVM, IDX, serialized networks). Exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A run that started but could not finish (divergence, too many aborted trials). Exit code 4.
class RunError : public std::runtime_error {
public:
    explicit RunError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace zorl
