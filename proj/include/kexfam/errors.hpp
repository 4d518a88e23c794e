#pragma once

#include <stdexcept>
#include <string>

namespace kexfam {

// Bad arguments, malformed files, contract violations by the caller.
// The CLI maps these (and flag-parsing failures) to exit code 2.
struct input_error : std::invalid_argument {
  explicit input_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failure inside a solver or evaluation (non-finite values,
// diverged factorization).  CLI exit code 1.
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A requested computation exceeds a configured size cap and was refused.
// CLI exit code 1 (unless the cap itself was mis-set, which is input_error).
struct resource_error : std::runtime_error {
  explicit resource_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A quantity required by an evaluation (e.g. a reference score) is
// undefined or non-finite at a concrete point.  CLI exit code 1.
struct evaluation_error : std::runtime_error {
  explicit evaluation_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kexfam
