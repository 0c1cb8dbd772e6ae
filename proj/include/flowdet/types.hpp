// Dense type aliases and the error taxonomy shared by every module.
// All numerics run on 64-bit reals; Eigen is the only math dependency.
#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace flowdet {

using Real = double;
using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<Real>;
using Vector = VectorX<Real>;

// Expression-friendly read-only views; accept blocks and maps without copies.
using MatrixRef = Eigen::Ref<const Matrix>;
using VectorRef = Eigen::Ref<const Vector>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Pivot below threshold in an LU factorization.
struct SingularMatrix : Error {
  using Error::Error;
};

// A layer's parameters do not define an invertible map (e.g. singular
// convolution weight).
struct NonInvertibleParams : Error {
  using Error::Error;
};

// Inverse pass received a value outside the transform's range.
struct OutOfDomain : Error {
  using Error::Error;
};

// Uniform base density evaluated outside (0,1)^d.
struct OutOfSupport : Error {
  using Error::Error;
};

struct NotOrthogonal : Error {
  using Error::Error;
};

struct DegenerateData : Error {
  using Error::Error;
};

struct EmptyTrace : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// Bad user-supplied value (unknown dataset name, split index out of range,
// init slope outside the attainable interval, ...).
struct InvalidArgument : Error {
  using Error::Error;
};

// Configuration file problem; carries the offending line when known.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_number(line) {}
  int line_number;
};

inline void require_finite(MatrixRef a, const char* what) {
  if (!a.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite entries");
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace flowdet
