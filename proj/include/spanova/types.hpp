#pragma once

#include <Eigen/Dense>

namespace spanova {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
// residual/expression matrices are traversed gene-row-wise in the sampler
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

}  // namespace spanova
