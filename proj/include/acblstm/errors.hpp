#ifndef ACBLSTM_ERRORS_HPP_
#define ACBLSTM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace acblstm {

// Error taxonomy used across the library. The CLI maps these to exit codes:
// config_error/parse_error -> 1, usage -> 2, numeric_error -> 3.

/// Tensor shape or dimension mismatch (also invalid/zero dims, size mismatch,
/// sequence-too-short).
struct shape_error : std::runtime_error {
  explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Index or range outside the valid bounds (slice ranges, class labels).
struct bounds_error : std::runtime_error {
  explicit bounds_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value encountered where a finite one is required.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// API contract violation (non-scalar backward seed, empty sequence,
/// batch of one in train-mode batchnorm, non-deterministic gradcheck target).
struct contract_error : std::runtime_error {
  explicit contract_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid configuration value or violated configuration invariant.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file; message carries the offending line number.
struct parse_error : std::runtime_error {
  explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace acblstm

#endif  // ACBLSTM_ERRORS_HPP_
