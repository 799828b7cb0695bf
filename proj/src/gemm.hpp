// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

namespace tinyunet::detail {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

inline MatrixView view(float* p, Eigen::Index rows, Eigen::Index cols) {
    return MatrixView(p, rows, cols);
}
inline ConstMatrixView view(const float* p, Eigen::Index rows, Eigen::Index cols) {
    return ConstMatrixView(p, rows, cols);
}

}  // namespace tinyunet::detail
