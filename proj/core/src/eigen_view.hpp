#pragma once

#include <Eigen/Core>

#include "gafnet/tensor.hpp"

namespace gafnet::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using MatrixView = Eigen::Map<RowMatrix>;

inline ConstMatrixView view(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatrixView(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline MatrixView view(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatrixView(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Rank-2 view of a [rows x cols] tensor.
inline ConstMatrixView view(const Tensor& t) { return view(t, t.dim(0), t.dim(1)); }
inline MatrixView view(Tensor& t) { return view(t, t.dim(0), t.dim(1)); }

}  // namespace gafnet::detail
