#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "cgid/numeric/matrix.hpp"
#include "cgid/numeric/rng.hpp"
#include "cgid/types.hpp"

namespace cgid::test {

inline DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  DenseMatrix m(rows, cols);
  for (double& v : m.values()) v = scale * standard_normal(rng);
  return m;
}

// Central differences of a scalar function with respect to every entry of `values`.
inline std::vector<double> numeric_gradient(std::span<double> values, const std::function<double()>& f,
                                            double eps = 1e-5) {
  std::vector<double> g(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double keep = values[k];
    values[k] = keep + eps;
    const double up = f();
    values[k] = keep - eps;
    const double down = f();
    values[k] = keep;
    g[k] = (up - down) / (2.0 * eps);
  }
  return g;
}

// ‖a − b‖ / max(‖a‖, ‖b‖, floor).
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    diff += (a[k] - b[k]) * (a[k] - b[k]);
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Largest number of agreeing pairs over every bijection between the distinct predicted and true ids.
inline std::size_t brute_force_matches(std::span<const Label> pred, std::span<const Label> truth) {
  std::vector<Label> p_ids(pred.begin(), pred.end());
  std::vector<Label> t_ids(truth.begin(), truth.end());
  std::sort(p_ids.begin(), p_ids.end());
  p_ids.erase(std::unique(p_ids.begin(), p_ids.end()), p_ids.end());
  std::sort(t_ids.begin(), t_ids.end());
  t_ids.erase(std::unique(t_ids.begin(), t_ids.end()), t_ids.end());
  const std::size_t n = std::max(p_ids.size(), t_ids.size());
  std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(n, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto r = std::lower_bound(p_ids.begin(), p_ids.end(), pred[i]) - p_ids.begin();
    const auto c = std::lower_bound(t_ids.begin(), t_ids.end(), truth[i]) - t_ids.begin();
    ++counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t s = 0;
    for (std::size_t r = 0; r < n; ++r) s += counts[r][perm[r]];
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Plain-domain Sinkhorn: Q = exp(L/eps); per iteration columns to batch/K, then rows to 1.
inline DenseMatrix reference_sinkhorn(const DenseMatrix& logits, double eps, std::size_t iterations,
                                      std::vector<double>* column_sums = nullptr) {
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  DenseMatrix q(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) q(i, j) = std::exp(logits(i, j) / eps);
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += q(i, j);
      for (std::size_t i = 0; i < n; ++i) q(i, j) *= static_cast<double>(n) / static_cast<double>(k) / s;
    }
    if (column_sums) {
      column_sums->assign(k, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) (*column_sums)[j] += q(i, j);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += q(i, j);
      for (std::size_t j = 0; j < k; ++j) q(i, j) /= s;
    }
  }
  if (iterations == 0) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += q(i, j);
      for (std::size_t j = 0; j < k; ++j) q(i, j) /= s;
    }
  }
  return q;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.values().size(); ++k) m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
  return m;
}

}  // namespace cgid::test
