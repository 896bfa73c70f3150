#pragma once

#include <stdexcept>
#include <string>

namespace cores {

// Error hierarchy used across the library. Every failure carries a
// human-readable message naming the offending quantity.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor/mask/matrix shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Value outside the mathematical domain of an operation (log of <= 0, ...).
struct DomainError : Error {
    using Error::Error;
};

// Index or label out of range.
struct IndexError : Error {
    using Error::Error;
};

// Invalid configuration or parameter value.
struct ValueError : Error {
    using Error::Error;
};

// Malformed input file; message carries file name and line when known.
struct ParseError : Error {
    using Error::Error;
};

// Operation invoked in an invalid state (empty buffer, consumed tape, ...).
struct StateError : Error {
    using Error::Error;
};

// Filesystem / stream failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace cores
