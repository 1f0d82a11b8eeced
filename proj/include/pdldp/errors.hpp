#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pdldp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad shapes, out-of-range indices, ill-formed parameters.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Non-finite value encountered where a finite one is required.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Raised by the Euler integrators when |X_k| exceeds the divergence threshold
/// or becomes non-finite. `index()` is the first offending grid index.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t index, double magnitude)
        : Error("state diverged at grid index " + std::to_string(index) +
                " (|x| = " + std::to_string(magnitude) + ")"),
          index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

} // namespace pdldp
