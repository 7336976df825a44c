#pragma once

#include <stdexcept>
#include <string>

namespace posekit {

// Invalid shapes, parameters, or model configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// File-level failures: missing, truncated, malformed.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric faults during execution: NaN outputs, overflow.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace posekit
