#pragma once

#include <stdexcept>
#include <string>

namespace treeslam {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input geometry for which the requested quantity is undefined
/// (coincident points, non-finite values, collinear clouds).
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class DegenerateCloudError : public DegenerateGeometryError {
 public:
  using DegenerateGeometryError::DegenerateGeometryError;
};

class MissingKeyError : public Error {
 public:
  using Error::Error;
};

class NumericalFailureError : public Error {
 public:
  using Error::Error;
};

/// Malformed frame log, CSV or config content. `where()` names the frame
/// number or field path the problem was found at.
class SchemaError : public Error {
 public:
  SchemaError(std::string where, const std::string& what)
      : Error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace treeslam
