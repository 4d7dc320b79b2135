#pragma once

#include <stdexcept>
#include <string>

namespace tthjb {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or dimension mismatch between arguments.
struct DimensionError : Error {
    using Error::Error;
};

/// A numerical construction could not be carried out stably.
struct NumericalError : Error {
    using Error::Error;
};

/// Trajectory left the admissible range (non-finite state or norm above the blow-up threshold).
struct BlowUpError : Error {
    BlowUpError(const std::string& what, double t) : Error(what), time(t) {}
    double time;
};

/// An iterative solver failed (divergence, stagnation, bad step size).
struct SolverError : Error {
    using Error::Error;
};

/// Reading or writing a file failed, or its contents are malformed.
struct IoError : Error {
    using Error::Error;
};

}  // namespace tthjb
