#pragma once

#include <Eigen/Dense>

namespace synfin {

/// Row-major dense matrix used for window sets and network tensors.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace synfin
