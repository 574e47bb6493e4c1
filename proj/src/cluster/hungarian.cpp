#include "cgid/cluster/hungarian.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "cgid/errors.hpp"

namespace cgid {

Label AssignmentMap::map(Label source) const {
  auto it = std::lower_bound(sources.begin(), sources.end(), source);
  if (it == sources.end() || *it != source) return kUnmatched;
  return targets[static_cast<std::size_t>(it - sources.begin())];
}

std::size_t AssignmentMap::matched_pairs() const {
  return static_cast<std::size_t>(std::count_if(targets.begin(), targets.end(), [](Label t) { return t != kUnmatched; }));
}

std::vector<int> solve_min_cost_assignment(const DenseMatrix& cost) {
  const std::size_t rows = cost.rows();
  const std::size_t cols = cost.cols();
  const std::size_t n = std::max(rows, cols);
  if (n == 0) return {};
  auto c = [&](std::size_t i, std::size_t j) { return i < rows && j < cols ? cost(i, j) : 0.0; };

  // Shortest augmenting path with row/column potentials, 1-based with a virtual column 0.
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - u[i0] - v[j];
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
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = owner[j];
    if (i >= 1 && i <= rows && j <= cols) row_to_col[i - 1] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

AssignmentMap hungarian_align(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) throw ContractError("hungarian_align: sequences differ in length");
  if (predicted.empty()) throw ContractError("hungarian_align: empty input");

  std::vector<Label> pred_ids(predicted.begin(), predicted.end());
  std::vector<Label> true_ids(truth.begin(), truth.end());
  std::sort(pred_ids.begin(), pred_ids.end());
  pred_ids.erase(std::unique(pred_ids.begin(), pred_ids.end()), pred_ids.end());
  std::sort(true_ids.begin(), true_ids.end());
  true_ids.erase(std::unique(true_ids.begin(), true_ids.end()), true_ids.end());
  auto index_of = [](const std::vector<Label>& ids, Label x) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), x) - ids.begin());
  };

  DenseMatrix counts(pred_ids.size(), true_ids.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) counts(index_of(pred_ids, predicted[i]), index_of(true_ids, truth[i])) += 1.0;
  DenseMatrix cost = counts;
  for (double& x : cost.values()) x = -x;

  const auto rows = solve_min_cost_assignment(cost);
  AssignmentMap map;
  map.sources = pred_ids;
  map.targets.assign(pred_ids.size(), kUnmatched);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0) continue;
    map.targets[r] = true_ids[static_cast<std::size_t>(rows[r])];
    map.objective += counts(r, static_cast<std::size_t>(rows[r]));
  }
  return map;
}

AssignmentMap align_centroids(const DenseMatrix& old_centroids, const DenseMatrix& new_centroids) {
  if (old_centroids.rows() != new_centroids.rows() || old_centroids.cols() != new_centroids.cols()) {
    throw ContractError("align_centroids: centroid sets differ in shape");
  }
  const std::size_t k = new_centroids.rows();
  DenseMatrix cost(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) cost(i, j) = squared_distance(new_centroids.row(i), old_centroids.row(j));
  const auto rows = solve_min_cost_assignment(cost);
  AssignmentMap map;
  for (std::size_t i = 0; i < k; ++i) {
    map.sources.push_back(static_cast<Label>(i));
    map.targets.push_back(static_cast<Label>(rows[i]));
    map.objective += cost(i, static_cast<std::size_t>(rows[i]));
  }
  return map;
}

}  // namespace cgid
