#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace retboost {

// Dense row-major types. Training math runs in double; on-disk feature and
// checkpoint payloads are float32 (see io.hpp).
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using MatrixXf = Matrix<float>;
using VectorXd = Vector<double>;
using VectorXf = Vector<float>;

using PairId = std::uint64_t;
using IdentityLabel = std::int64_t;

}  // namespace retboost
