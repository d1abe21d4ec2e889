#pragma once

#include <stdexcept>
#include <string>

namespace fedtrans {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes do not conform to an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A model, training or experiment configuration is invalid.
class ConfigurationError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a precondition that is not about shapes.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An operation received an empty batch, dataset or axis.
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// A covariate value is absent or NaN.
class MissingValueError : public Error {
 public:
  using Error::Error;
};

/// A data, schema, description or checkpoint file could not be read.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Parameter sets uploaded by different sites are not index-aligned.
class AggregationError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A metric needs information the records do not carry.
class MetricUnavailableError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedtrans
