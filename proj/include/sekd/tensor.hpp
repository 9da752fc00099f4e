#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace sekd {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Buffers viewed through Eigen maps must sit on Eigen's packet boundary:
/// vectorized reductions peel a misaligned head, which changes summation
/// order and breaks bit-reproducibility across heap layouts.
template <typename T>
using AlignedVec = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense parameter array with a shape; rank 1 or 2.
template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  AlignedVec<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, T fill = T(0))
      : shape(std::move(s)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                             std::multiplies<>()),
             fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? shape.at(0) : shape[1]; }

  Eigen::Map<RowMat<T>> mat() {
    return {data.data(), static_cast<Eigen::Index>(rows()),
            static_cast<Eigen::Index>(cols())};
  }
  Eigen::Map<const RowMat<T>> mat() const {
    return {data.data(), static_cast<Eigen::Index>(rows()),
            static_cast<Eigen::Index>(cols())};
  }
  Eigen::Map<RowVec<T>> vec() {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }
  Eigen::Map<const RowVec<T>> vec() const {
    return {data.data(), static_cast<Eigen::Index>(data.size())};
  }

  bool operator==(const Tensor &) const = default;
};

} // namespace sekd
