#pragma once

#include <cstddef>
#include <vector>

#include "hierkit/error.hpp"

namespace hierkit {

// Dense row-major double matrix. Small utility shared by the matching,
// decoder and losses modules (similarity matrices, affinity matrices,
// query embeddings).
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  bool operator==(const Matrix&) const = default;
};

}  // namespace hierkit
