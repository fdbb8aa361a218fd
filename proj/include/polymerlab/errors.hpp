#ifndef POLYMERLAB_ERRORS_HPP
#define POLYMERLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace polymer {

/// Invalid parameters or configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure failed to reach its tolerance (exit code 3).
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double achieved)
        : std::runtime_error(what), achieved_(achieved)
    {
    }
    double achieved() const noexcept { return achieved_; }

private:
    double achieved_;
};

/// An exhaustive computation would exceed its enumeration cap (exit code 4).
class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable, corrupt or incompatible checkpoint (exit code 3).
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace polymer

#endif
