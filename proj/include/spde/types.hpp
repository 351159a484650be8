#pragma once

#include <Eigen/Dense>

namespace spde {

// Row-major so that a [time][space] field maps directly onto file order.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace spde
