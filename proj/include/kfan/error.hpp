#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kfan {

/// Base class for all kfan errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatch between operands (wrong vector length, matrix dims).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the operation's domain (empty batch, unknown branch,
/// probability outside [0,1], ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Non-finite value encountered where the contract requires finite numbers.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed file content. Carries the byte offset of the defect.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t byte_offset)
        : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
          offset(byte_offset) {}

    std::size_t offset;
};

/// Refusal from the brute-force oracle: the model is too large to enumerate.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// Config text rejected. Carries the 1-based line number of the defect.
class ParseError : public Error {
public:
    ParseError(const std::string& what, int line_number)
        : Error("line " + std::to_string(line_number) + ": " + what),
          line(line_number) {}

    int line;
};

}  // namespace kfan
