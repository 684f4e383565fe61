#pragma once

#include <stdexcept>
#include <string>

namespace evgame {

// Error taxonomy mirrors the CLI exit codes: config/validation problems,
// solver convergence problems, and file I/O problems.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace evgame
