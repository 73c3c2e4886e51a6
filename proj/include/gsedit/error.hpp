#pragma once

#include <stdexcept>
#include <string>

namespace gsedit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed file layout (missing PLY property, bad header, bad PFM banner).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Well-formed file carrying values that violate a data invariant.
class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Semantic validation failure of user-supplied inputs (cameras, configs).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation's precondition (shape mismatch, missing field).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Non-finite values produced during a numerical loop.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Failure reported by a score provider (external process, malformed output).
class ProviderError : public Error {
public:
    using Error::Error;
};

}  // namespace gsedit
