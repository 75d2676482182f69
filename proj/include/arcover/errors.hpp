#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace arcover {

/// Error classes. Each maps to one stable CLI exit code (see tools/arcover.cpp).
enum class ErrorKind {
  Domain,
  DimensionMismatch,
  Parse,
  RankDeficient,
  IllConditioned,
  DegenerateResiduals,
  DegenerateFit,
  Numeric,
  Io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::Domain, what) {}
};

class DimensionMismatchError : public Error {
 public:
  explicit DimensionMismatchError(const std::string& what)
      : Error(ErrorKind::DimensionMismatch, what) {}
};

/// Non-numeric or malformed input cell; row and col are 1-based file coordinates.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t col)
      : Error(ErrorKind::Parse, what + " (row " + std::to_string(row) + ", col " +
                                    std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class RankDeficientError : public Error {
 public:
  explicit RankDeficientError(const std::string& what) : Error(ErrorKind::RankDeficient, what) {}
};

class IllConditionedError : public Error {
 public:
  explicit IllConditionedError(const std::string& what)
      : Error(ErrorKind::IllConditioned, what) {}
};

class DegenerateResidualsError : public Error {
 public:
  explicit DegenerateResidualsError(const std::string& what)
      : Error(ErrorKind::DegenerateResiduals, what) {}
};

class DegenerateFitError : public Error {
 public:
  explicit DegenerateFitError(const std::string& what) : Error(ErrorKind::DegenerateFit, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

}  // namespace arcover
