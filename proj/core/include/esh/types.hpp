#pragma once

#include <Eigen/Core>

#include <cstddef>

namespace esh {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace esh
