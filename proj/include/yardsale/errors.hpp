#pragma once

#include <stdexcept>
#include <string>

namespace yardsale {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Density with zero (or non-finite) total mass.
class DegenerateDensityError : public Error {
public:
    using Error::Error;
};

/// Inequality metric requested for a population with no wealth.
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// Explicit time step produced non-finite values.
class InstabilityError : public Error {
public:
    using Error::Error;
};

/// Stationary problem posed where no stationary density exists (chi = 0).
class NoSteadyStateError : public Error {
public:
    using Error::Error;
};

/// Tail regression could not be performed.
class FitError : public Error {
public:
    using Error::Error;
};

/// Order-statistics estimator is undefined for the given sample.
class EstimatorError : public Error {
public:
    using Error::Error;
};

/// Monitored conservation budget exceeded.
class ConservationError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ArgumentError(message);
}

}  // namespace detail

}  // namespace yardsale
