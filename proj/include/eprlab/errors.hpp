#pragma once

#include "eprlab/linalg.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eprlab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, dimension mismatches, missing inputs.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A quantity the model family cannot supply (stationary data, closed forms).
class UnsupportedModelError : public Error {
public:
    using Error::Error;
};

class AvailabilityError : public Error {
public:
    using Error::Error;
};

class InsufficientSampleError : public Error {
public:
    using Error::Error;
};

class EmptyPathError : public Error {
public:
    using Error::Error;
};

class DegenerateLimitError : public Error {
public:
    using Error::Error;
};

class HorizonError : public Error {
public:
    using Error::Error;
};

/// Non-finite state or functional. Carries the step at which it appeared and
/// the last finite state (empty when no state is associated).
class NumericError : public Error {
public:
    NumericError(const std::string& what, std::size_t step, Vec last_finite = Vec())
        : Error(what + " (step " + std::to_string(step) + ")"),
          step_(step),
          last_finite_(std::move(last_finite)) {}

    std::size_t step() const noexcept { return step_; }
    const Vec& last_finite_state() const noexcept { return last_finite_; }

private:
    std::size_t step_;
    Vec last_finite_;
};

}  // namespace eprlab
