#pragma once

#include <Eigen/Core>

#include "tsprobe/error.hpp"
#include "tsprobe/rng.hpp"

namespace tsprobe {

/// N x T batch of series, one series per contiguous row.
using SeriesMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace tsprobe
