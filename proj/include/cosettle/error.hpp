#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cosettle {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A scalar parameter or configuration value is outside its domain.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Input data is malformed, e.g. contains NaN or Inf.
class InvalidInputError : public Error {
public:
    using Error::Error;
};

/// An iterative method failed to converge or a computation produced NaN.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A caller broke an API contract (stale cache, mismatched bundles).
class ContractError : public Error {
public:
    using Error::Error;
};

/// A binary file is malformed. Carries the byte offset where parsing failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

}  // namespace cosettle
