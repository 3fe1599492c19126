#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace convret {

/// Dense row-major matrix of doubles; one descriptor per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// n x d matrix of local descriptors at some pipeline stage.
using DescriptorSet = RowMatrix;

/// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent or out-of-range configuration. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad input data: malformed files, shape mismatches, missing inputs. CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

enum class ParseErrorKind {
  kBadMagic,
  kTruncated,
  kNonFinite,
  kInvalidDimensions,
  kIo,
};

class ParseError : public DataError {
 public:
  ParseError(ParseErrorKind kind, const std::string& what) : DataError(what), kind_(kind) {}
  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

/// A caller broke an operation's documented precondition (wrong dims, non-unit rows, ...).
class PreconditionError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace convret
