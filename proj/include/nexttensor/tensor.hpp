// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <numeric>
#include <vector>

namespace nxt {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

/// Dense row-major array of rank 1 or 2. Rank-1 arrays view as 1 x n.
template <typename S>
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> d) : dims(std::move(d)) {
    data.assign(std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                                [](std::size_t a, std::uint32_t b) { return a * b; }),
                S(0));
  }
  static Tensor vec(int n) { return Tensor({static_cast<std::uint32_t>(n)}); }
  static Tensor mat(int r, int c) { return Tensor({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c)}); }

  int rank() const { return static_cast<int>(dims.size()); }
  Eigen::Index rows() const { return dims.size() == 2 ? dims[0] : 1; }
  Eigen::Index cols() const { return dims.empty() ? 0 : dims.back(); }
  std::size_t size() const { return data.size(); }

  Eigen::Map<RowMat<S>> m() { return {data.data(), rows(), cols()}; }
  Eigen::Map<const RowMat<S>> m() const { return {data.data(), rows(), cols()}; }
  Eigen::Map<RowVec<S>> v() { return {data.data(), static_cast<Eigen::Index>(data.size())}; }
  Eigen::Map<const RowVec<S>> v() const { return {data.data(), static_cast<Eigen::Index>(data.size())}; }

  /// Row r as a 1 x cols map.
  Eigen::Map<RowVec<S>> row(Eigen::Index r) { return {data.data() + r * cols(), cols()}; }
  Eigen::Map<const RowVec<S>> row(Eigen::Index r) const { return {data.data() + r * cols(), cols()}; }

  void zero() { std::fill(data.begin(), data.end(), S(0)); }
};

}  // namespace nxt
