#pragma once

#include <Eigen/Core>

namespace semsplat {

// Row-major dense matrix; rows are records (features, prototypes, Gaussians).
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace semsplat
