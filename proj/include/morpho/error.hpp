#ifndef MORPHO_ERROR_HPP
#define MORPHO_ERROR_HPP

#include <stdexcept>
#include <string>

namespace morpho {

/// Base class for all errors thrown by the library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or malformed user input (bad file, bad flag, violated precondition).
struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(msg) {}
};

/// A computation that started from valid input failed (singular system,
/// inverted elements, stagnant streamline, ...).
struct ComputeError : Error {
    explicit ComputeError(const std::string& msg) : Error(msg) {}
};

} // namespace morpho

#endif
