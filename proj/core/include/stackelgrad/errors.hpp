#pragma once

#include <stdexcept>
#include <string>

namespace stackelgrad {

// Shape rule violated when wiring or executing a graph op.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// A forward op produced a non-finite value, or an input left an op's domain.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A documented precondition was violated by the caller.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// Training diverged; the message carries the failing step index.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, long step)
        : std::runtime_error(what), step_index(step) {}
    long step_index;
};

// Bad config file or CLI arguments; maps to process exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace stackelgrad
