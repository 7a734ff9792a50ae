#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace cadmr {

// Dense row-major matrix, the engine-wide tensor type. Rank-2 covers every
// quantity in the model: item/user matrices, latent batches, biases (1 x D),
// scalars (1 x 1).
template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matd = Matrix<double>;
using Matf = Matrix<float>;

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeError : std::invalid_argument {
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

template <class S>
bool all_finite(const Matrix<S>& m) {
  return m.allFinite();
}

// Every forward op funnels its result through this; a NaN/Inf anywhere in the
// pipeline surfaces as an error naming the tensor that produced it.
template <class S>
void ensure_finite(const Matrix<S>& m, const char* label) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite values in tensor '") + label + "'");
  }
}

template <class S>
std::string shape_str(const Matrix<S>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void check(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

}  // namespace cadmr
