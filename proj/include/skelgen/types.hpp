#pragma once

#include <Eigen/Dense>

namespace skelgen {

using Index = Eigen::Index;

// Row-major dense matrix: rows are sequence positions, columns are features.
template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatD = Mat<double>;
using MatF = Mat<float>;
using VecD = Vec<double>;

}  // namespace skelgen
