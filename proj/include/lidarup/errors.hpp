#pragma once

#include <stdexcept>
#include <string>

namespace lidarup {

// Error taxonomy; each class maps onto a distinct CLI exit code.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration: bad parameter values, incompatible shapes, unknown keys.
struct ConfigError : Error {
    using Error::Error;
};

// Value outside its documented domain (e.g. depth beyond d_max).
struct RangeError : Error {
    using Error::Error;
};

// Filesystem-level failures: missing files, unwritable paths.
struct IoError : Error {
    using Error::Error;
};

// Structurally malformed file contents.
struct ParseError : Error {
    using Error::Error;
};

// Checkpoint-specific failures: bad magic, version or fingerprint mismatch, truncation.
struct CheckpointError : Error {
    using Error::Error;
};

// Numerical failures: divergence, non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

} // namespace lidarup
