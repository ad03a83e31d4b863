#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sppca {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that do not fit together, or zero-sized requests.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A QR factorization met a column with numerically zero residual norm.
class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(std::size_t column, const std::string& what)
      : Error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

/// Raised by the blocked QB loop when the residual sample Y_i loses rank.
class BlockDeficiencyError : public RankDeficiencyError {
 public:
  BlockDeficiencyError(std::size_t block, std::size_t column, const std::string& what)
      : RankDeficiencyError(column, what), block_(block) {}
  std::size_t block() const noexcept { return block_; }

 private:
  std::size_t block_;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or otherwise unusable input to a kernel.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A row source produced a block of the wrong shape or out of order.
class StreamFormatError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value found while streaming; carries the global row index.
class DataError : public Error {
 public:
  DataError(std::size_t row, const std::string& what) : Error(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class EmptyStreamError : public Error {
 public:
  using Error::Error;
};

/// The algorithm needs a stream capability (reset) the source does not offer.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Invalid algorithm parameters. The CLI maps this to a usage error.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// File payload or header inconsistent with the declared layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Request exceeds what a desk-scale oracle is allowed to handle.
class ScaleError : public Error {
 public:
  using Error::Error;
};

}  // namespace sppca
