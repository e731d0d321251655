#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace comp {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape mismatch between operands.
class DimensionError : public Error {
  public:
    using Error::Error;
};

/// Cholesky factorization hit a non-positive pivot.
class NotPositiveDefiniteError : public Error {
  public:
    NotPositiveDefiniteError(const std::string& msg, std::size_t pivot_index)
        : Error(msg), pivot(pivot_index) {}
    std::size_t pivot;
};

/// Triangular solve hit a zero diagonal entry.
class SingularError : public Error {
  public:
    using Error::Error;
};

/// An iterative method ran out of iterations.
class ConvergenceError : public Error {
  public:
    ConvergenceError(const std::string& msg, std::size_t iters, double last_residual)
        : Error(msg), iterations(iters), residual(last_residual) {}
    std::size_t iterations;
    double residual;
};

/// File could not be read or written.
class IoError : public Error {
  public:
    using Error::Error;
};

/// Checkpoint manifest or blob is malformed.
class CheckpointError : public Error {
  public:
    using Error::Error;
};

/// Prune configuration cannot be satisfied.
class InfeasibleError : public Error {
  public:
    using Error::Error;
};

/// Both mask-tuning solver paths failed.
class SolverError : public Error {
  public:
    using Error::Error;
};

/// Training loss became non-finite.
class DivergenceError : public Error {
  public:
    using Error::Error;
};

}  // namespace comp
