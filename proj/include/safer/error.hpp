#pragma once

#include <stdexcept>
#include <string>

namespace safer {

// Caller passed something that violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Input data is unusable: unreadable, malformed, or numerically degenerate.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

class IntegrityError : public DataError {
public:
    using DataError::DataError;
};

class DegenerateSpectrumError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace safer
