#pragma once

#include <stdexcept>
#include <string>

namespace chanae {

/// Tensor shapes do not conform for the requested operation.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A configuration value is out of range or unrecognized.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Caller-supplied data violates an operation's precondition.
class InputError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Operation invoked in the wrong lifecycle state (e.g. backward before forward).
class StateError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class DegenerateInputError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

class UnsupportedError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace chanae
