#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace cfcp {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = Mat<double>;
using Vector = Vec<double>;
using RowVector = RowVec<double>;
using IntVector = Vec<int>;
using Index = Eigen::Index;

/// Invalid parameters or configuration. Mapped to CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. Mapped to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfcp
