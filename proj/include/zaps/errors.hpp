#pragma once

#include <stdexcept>
#include <string>

namespace zaps {

// Invalid user-facing input: config files, CLI values, malformed data files.
// The CLI maps this to exit code 1.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Runtime numerical failure (solver divergence, non-finite values).
// The CLI maps this to exit code 2.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Conjugate-gradient non-convergence, with the achieved residual attached.
struct cg_failure : numeric_error {
    cg_failure(const std::string& msg, double residual_, int iterations_)
        : numeric_error(msg), residual(residual_), iterations(iterations_) {}
    double residual;
    int iterations;
};

}  // namespace zaps
