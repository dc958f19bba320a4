#pragma once

#include <vector>

#include "srb/common.hpp"

namespace srb {

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double objective = 0.0;  // sum over rows of cost(i, row_to_col[i]), accumulated in row order
};

enum class Sense { minimize, maximize };

/// Exact linear assignment on a square matrix via the shortest augmenting
/// path form of the Hungarian method, O(d^3).
///
/// Ties: rows are inserted in ascending order and, within each Dijkstra
/// sweep, the first column (ascending) attaining the minimum reduced cost is
/// taken. The result is therefore a fixed function of the matrix.
Assignment hungarian(const Matrix<double>& cost, Sense sense = Sense::maximize);

}  // namespace srb
