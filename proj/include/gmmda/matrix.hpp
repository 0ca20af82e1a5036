/* Copyright 2026 The gmmda Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef GMMDA_MATRIX_HPP_
#define GMMDA_MATRIX_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gmmda/error.hpp"

namespace gmmda {

// Plain row-major matrix for data that never enters a Graph.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{})
      : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<T> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
      throw DimensionError("matrix " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " given " +
                           std::to_string(data.size()) + " values");
    }
  }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  // Rows in the given order.
  Matrix gather(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto src = row(idx[i]);
      std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
  }
  // Rows [begin, end).
  Matrix slice(std::size_t begin, std::size_t end) const {
    Matrix out(end - begin, cols);
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin * cols),
              data.begin() + static_cast<std::ptrdiff_t>(end * cols),
              out.data.begin());
    return out;
  }

  bool operator==(const Matrix&) const = default;
};

using FeatureMatrix = Matrix<double>;
using LabelMatrix = Matrix<std::uint8_t>;

}  // namespace gmmda

#endif  // GMMDA_MATRIX_HPP_
