#pragma once

#include <stdexcept>
#include <string>

namespace sceneflow {

// Common base so callers can catch everything from this library at once.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/op shape mismatch.
struct DimensionError : Error { using Error::Error; };
// Out-of-range element or row access.
struct IndexError : Error { using Error::Error; };
// A size precondition was violated (e.g. sample count > population).
struct SizeError : Error { using Error::Error; };
// Any other API contract violation (empty neighborhoods, bad ranges, ...).
struct ContractError : Error { using Error::Error; };
// NaN/Inf encountered where only finite values are valid.
struct NumericError : Error { using Error::Error; };
// Malformed file content; messages carry the byte offset where known.
struct FormatError : Error { using Error::Error; };
// Checkpoint manifest/blob problems, including shape mismatches on load.
struct CheckpointError : Error { using Error::Error; };
// Point count incompatible with the requested pyramid resolutions.
struct ResolutionError : Error { using Error::Error; };
// Training produced non-finite losses or gradients.
struct DivergenceError : Error { using Error::Error; };

}  // namespace sceneflow
