#include "cgid/cluster/sinkhorn.hpp"

#include <cmath>
#include <limits>

#include "cgid/errors.hpp"

namespace cgid {
namespace {

template <typename Get>
double log_sum_exp(std::size_t n, Get get) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, get(i));
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(get(i) - m);
  return m + std::log(s);
}

void normalize_rows(DenseMatrix& log_q) {
  for (std::size_t i = 0; i < log_q.rows(); ++i) {
    auto r = log_q.row(i);
    const double lse = log_sum_exp(r.size(), [&](std::size_t j) { return r[j]; });
    for (double& x : r) x -= lse;
  }
}

}  // namespace

SinkhornResult sinkhorn_calibrate(const DenseMatrix& logits, double epsilon, std::size_t iterations) {
  if (!(epsilon > 0.0)) throw ConfigError("sinkhorn epsilon must be positive", "sk_epsilon");
  if (logits.rows() == 0 || logits.cols() == 0) throw ContractError("sinkhorn_calibrate: empty logits");
  const std::size_t batch = logits.rows();
  const std::size_t k = logits.cols();
  const double log_col_mass = std::log(static_cast<double>(batch) / static_cast<double>(k));

  DenseMatrix log_q = logits;
  for (double& x : log_q.values()) x /= epsilon;

  SinkhornResult result;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t j = 0; j < k; ++j) {
      const double lse = log_sum_exp(batch, [&](std::size_t i) { return log_q(i, j); });
      for (std::size_t i = 0; i < batch; ++i) log_q(i, j) += log_col_mass - lse;
    }
    if (it + 1 == iterations) {
      result.last_column_sums.assign(k, 0.0);
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t j = 0; j < k; ++j) result.last_column_sums[j] += std::exp(log_q(i, j));
    }
    normalize_rows(log_q);
  }
  if (iterations == 0) normalize_rows(log_q);

  result.assignment = std::move(log_q);
  for (double& x : result.assignment.values()) x = std::exp(x);
  return result;
}

}  // namespace cgid
