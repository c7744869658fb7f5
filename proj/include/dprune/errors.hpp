#pragma once

#include <stdexcept>
#include <string>

namespace dprune {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mismatched or invalid tensor/layer extents.
struct ShapeError : Error {
    using Error::Error;
};

// Element count does not fit the platform index range.
struct SizeError : Error {
    using Error::Error;
};

// Class label outside 0..9.
struct LabelError : Error {
    using Error::Error;
};

// Operation applied to an object in the wrong mode (e.g. backward on an
// eval-mode cache).
struct StateError : Error {
    using Error::Error;
};

// Invalid run/network configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Empty input where at least one element is required.
struct EmptyError : Error {
    using Error::Error;
};

// Data that cannot be normalized (zero pixel variance).
struct DegenerateDataError : Error {
    using Error::Error;
};

// IDX decoding failures, one subclass per failure kind.
struct ParseError : Error {
    using Error::Error;
};
struct BadMagicError : ParseError {
    using ParseError::ParseError;
};
struct TruncatedError : ParseError {
    using ParseError::ParseError;
};
struct BadDimsError : ParseError {
    using ParseError::ParseError;
};

// Filesystem-level failure (open/read/write).
struct IoError : Error {
    using Error::Error;
};

// Model file with wrong magic, version, or corrupt contents.
struct FormatError : Error {
    using Error::Error;
};

// Prune plan inconsistent with the network it is applied to.
struct PlanError : Error {
    using Error::Error;
};

}  // namespace dprune
