#include "palmar/assignment.hpp"

#include <algorithm>
#include <limits>

namespace palmar {

namespace {

// Potential-based Hungarian on an n x m matrix with n <= m.
// Returns row -> column. O(n^2 m).
std::vector<int> hungarian_rows_le_cols(const MatX& a) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::max();

  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);    // column -> row (1-based)
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = a(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<std::size_t>(j)] != 0)
      row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

}  // namespace

std::vector<int> min_cost_assignment(const MatX& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  if (n == 0) return {};
  if (m == 0) return std::vector<int>(static_cast<std::size_t>(n), -1);
  if (n <= m) return hungarian_rows_le_cols(cost);

  std::vector<int> col_to_row = hungarian_rows_le_cols(cost.transpose());
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 0; j < m; ++j)
    if (col_to_row[static_cast<std::size_t>(j)] >= 0)
      row_to_col[static_cast<std::size_t>(col_to_row[static_cast<std::size_t>(j)])] = j;
  return row_to_col;
}

std::vector<int> min_cost_assignment_gated(const MatX& cost, double gate) {
  std::vector<int> assign = min_cost_assignment(cost);
  for (std::size_t i = 0; i < assign.size(); ++i)
    if (assign[i] >= 0 && cost(static_cast<long>(i), assign[i]) > gate) assign[i] = -1;
  return assign;
}

}  // namespace palmar
