#pragma once

#include <stdexcept>
#include <string>

namespace tdcd {

// Invalid configuration or dimension mismatch. CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf encountered in data or intermediates.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite parameters after a gradient step. CLI exit code 2.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int client, int silo, long iteration)
        : std::runtime_error(what), client_index(client), silo_index(silo), iter(iteration) {}

    int client_index;
    int silo_index;
    long iter;
};

} // namespace tdcd
