#pragma once

#include <stdexcept>
#include <string>

namespace playertrack {

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent on-disk data.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A caller broke a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

}  // namespace playertrack
