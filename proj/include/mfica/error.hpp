#pragma once

#include <stdexcept>
#include <string>

namespace mfica {

/// Malformed or inconsistent input (bad shapes, parse failures, violated
/// preconditions). The CLI maps this to exit code 1.
class InputError : public std::invalid_argument {
public:
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical precondition failed on otherwise well-formed input, e.g. the
/// covariance has lower effective rank than requested. Exit code 2.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool ok, const std::string& msg)
{
    if (!ok) throw InputError(msg);
}

} // namespace detail
} // namespace mfica
