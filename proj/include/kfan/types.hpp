#pragma once

#include <Eigen/Core>

namespace kfan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace kfan
