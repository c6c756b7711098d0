#pragma once

#include <stdexcept>
#include <string>

namespace sdpchemo {

// Non-finite or out-of-domain argument.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A state, prediction or linear solve produced a non-finite value.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalOverflow : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Fixed-point iteration blew up.
class DivergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Bad field in a run configuration; what() names the field.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sdpchemo
