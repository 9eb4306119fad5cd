#pragma once

#include <stdexcept>
#include <string>

namespace hbvm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid method indices, unsupported sizes, mismatched modes.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public Error {
public:
    using Error::Error;
};

/// Crout (no pivoting) breakdown on a vanishing pivot.
class FactorizationError : public Error {
public:
    using Error::Error;
};

/// Auxiliary abscissae too close to each other for a usable Legendre matrix.
class DegenerateAbscissaeError : public Error {
public:
    using Error::Error;
};

class RootFindingError : public Error {
public:
    RootFindingError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class EigensolverError : public Error {
public:
    using Error::Error;
};

class OptimizationError : public Error {
public:
    using Error::Error;
};

/// Non-finite potential gradient met while evaluating the stage residual.
class EvaluationError : public Error {
public:
    using Error::Error;
};

class MeasurementError : public Error {
public:
    using Error::Error;
};

}  // namespace hbvm
