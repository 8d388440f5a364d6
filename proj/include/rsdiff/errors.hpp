#pragma once

#include <stdexcept>
#include <string>

namespace rsdiff {

// Configuration problems: bad config file, unknown key, invalid CLI usage.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem and data-file problems; message carries the offending path.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk payloads (image headers, tensor files, manifests).
struct ParseError : IoError {
    using IoError::IoError;
};

// Checkpoint-specific failure kinds, kept distinct so callers can tell a
// corrupted file from a merely incompatible one.
struct CrcError : IoError {
    using IoError::IoError;
};
struct VersionError : IoError {
    using IoError::IoError;
};
struct TruncationError : IoError {
    using IoError::IoError;
};

// NaN/Inf detected where finite values are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operation invoked in a state that cannot serve it (e.g. backward pass
// without a cached forward).
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace rsdiff
