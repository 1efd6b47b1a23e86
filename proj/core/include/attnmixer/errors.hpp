#pragma once

#include <stdexcept>
#include <string>

namespace attnmixer {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor shape / rank mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (e.g. log of
/// a non-positive value).
class DomainError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Invalid configuration, hyperparameter, or checkpoint/config mismatch.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or insufficient input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training failure (divergence, non-finite loss).
class TrainError : public Error {
 public:
  using Error::Error;
};

/// Filesystem / serialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace attnmixer
