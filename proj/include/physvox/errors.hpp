#pragma once

#include <stdexcept>
#include <string>

namespace physvox {

// Bad argument values (thresholds out of range, invalid counts, ...).
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Shape / resolution mismatches between grids or tensors.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or unreadable on-disk data (bad magic, truncated file, ...).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical solver failure (non-convergence, singular system).
struct SolverError : std::runtime_error {
    SolverError(const std::string& msg, double residual = 0.0)
        : std::runtime_error(msg), final_residual(residual) {}
    double final_residual;
};

// Inconsistent configuration (dataset/network mismatch, unknown keys, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset generation failure (too many skipped records, ungrounded shape, ...).
struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace physvox
