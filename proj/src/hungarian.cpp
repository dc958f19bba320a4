#include "srb/hungarian.hpp"

#include <limits>

namespace srb {

Assignment hungarian(const Matrix<double>& cost_in, Sense sense) {
  if (cost_in.rows() != cost_in.cols()) throw ShapeError("hungarian: cost matrix must be square");
  if (!cost_in.allFinite()) throw NumericError("hungarian: cost matrix has non-finite entries");
  const auto n = static_cast<std::size_t>(cost_in.rows());
  Assignment out;
  if (n == 0) return out;

  const double sign = sense == Sense::maximize ? -1.0 : 1.0;
  auto cost = [&](std::size_t i, std::size_t j) {
    return sign * cost_in(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  };

  // 1-based potentials; column 0 is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<double> minv(n + 1);
  std::vector<char> used(n + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  out.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.row_to_col[match[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) {
    out.objective += cost_in(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.row_to_col[i]));
  }
  return out;
}

}  // namespace srb
