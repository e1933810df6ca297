#pragma once

#include <stdexcept>
#include <string>

namespace prpo {

// Invalid configuration or dimension mismatch. CLI maps this to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (e.g. token id out of range).
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered in numerical code. CLI maps this to exit code 2.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace prpo
