#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace marvel {

// Dense row-major matrix, the storage type behind every tensor in the model.
// Column vectors are runtime Nx1 matrices of the same type.
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = MatX<float>;
using MatD = MatX<double>;

// Error taxonomy, mapped onto CLI exit codes: usage=1, data/validation=2,
// numeric=3. Shape and contract violations count as validation errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : DataError {
  using DataError::DataError;
};
struct ShapeError : DataError {
  using DataError::DataError;
};
struct ContractError : DataError {
  using DataError::DataError;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename S>
bool all_finite(const MatX<S>& m) {
  return m.allFinite();
}

template <typename S>
void require_finite(const MatX<S>& m, const std::string& what) {
  if (!m.allFinite()) throw NumericError(what + ": non-finite values");
}

}  // namespace marvel
