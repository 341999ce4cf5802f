#pragma once

#include <stdexcept>
#include <string>

namespace rimlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed file or wire payload.
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Serialized artifact written by an incompatible format version.
class UnsupportedVersion : public ParseError {
public:
    using ParseError::ParseError;
};

/// Lesion too small or too thin for the requested computation.
class DegenerateLesion : public Error {
public:
    using Error::Error;
};

} // namespace rimlab
