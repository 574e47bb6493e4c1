#include "cgid/plrd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cgid/errors.hpp"

namespace cgid {

namespace {

double log_sum_exp(std::span<const double> v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

void require_tau(double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive", "tau");
}

}  // namespace

DenseMatrix softmax_rows(const DenseMatrix& logits, double temperature) {
  require_tau(temperature);
  DenseMatrix out(logits.rows(), logits.cols());
  std::vector<double> scaled(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) scaled[k] = row[k] / temperature;
    const double lse = log_sum_exp(scaled);
    for (std::size_t k = 0; k < row.size(); ++k) out(i, k) = std::exp(scaled[k] - lse);
  }
  return out;
}

LossResult cross_entropy(const DenseMatrix& logits, const DenseMatrix& targets, std::span<const double> weights,
                         double temperature) {
  require_tau(temperature);
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw ShapeError("cross_entropy: targets must match logits");
  }
  if (!weights.empty() && weights.size() != logits.rows()) throw ShapeError("cross_entropy: one weight per row");
  LossResult out{0.0, DenseMatrix(logits.rows(), logits.cols())};
  std::vector<double> scaled(logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    auto row = logits.row(i);
    auto t = targets.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) scaled[k] = row[k] / temperature;
    const double lse = log_sum_exp(scaled);
    double mass = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (t[k] != 0.0) out.value -= w * t[k] * (scaled[k] - lse);
      mass += t[k];
    }
    for (std::size_t k = 0; k < row.size(); ++k) {
      out.grad(i, k) = w * (mass * std::exp(scaled[k] - lse) - t[k]) / temperature;
    }
  }
  return out;
}

LossResult cross_entropy(const DenseMatrix& logits, std::span<const Label> labels, std::span<const double> weights,
                         double temperature) {
  if (labels.size() != logits.rows()) throw ShapeError("cross_entropy: one label per row");
  DenseMatrix targets(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= logits.cols()) {
      throw ContractError("cross_entropy: label out of range");
    }
    targets(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return cross_entropy(logits, targets, weights, temperature);
}

LossResult pcl_loss(const DenseMatrix& projections, const DenseMatrix& prototypes, const DenseMatrix& q, double tau) {
  require_tau(tau);
  if (q.rows() != projections.rows() || q.cols() != prototypes.rows()) {
    throw ShapeError("pcl_loss: q must be batch × prototype count");
  }
  if (prototypes.cols() != projections.cols()) throw ShapeError("pcl_loss: prototype dimension mismatch");
  const DenseMatrix z = l2_normalize_rows(projections);
  const DenseMatrix mu = l2_normalize_rows(prototypes);
  const DenseMatrix sims = matmul_bt(z, mu);
  // Cross-entropy on sims/τ gives dL/ds; chain through s = ẑ·μᵀ/τ.
  LossResult ce = cross_entropy(sims, q, {}, tau);
  DenseMatrix grad_z = matmul(ce.grad, mu);
  return {ce.value, l2_normalize_rows_backward(projections, grad_z)};
}

PairLossResult instance_cl_loss(const DenseMatrix& z, const DenseMatrix& z_aug, double tau) {
  require_tau(tau);
  if (z.rows() != z_aug.rows() || z.cols() != z_aug.cols()) {
    throw ShapeError("instance_cl_loss: views must have the same shape");
  }
  const std::size_t n = z.rows();
  if (n < 2) throw ContractError("instance_cl_loss: batch of at least 2 required");
  const DenseMatrix a = l2_normalize_rows(z);
  const DenseMatrix b = l2_normalize_rows(z_aug);
  const DenseMatrix sims = matmul_bt(a, a);

  PairLossResult out{0.0, DenseMatrix(n, z.cols()), DenseMatrix(n, z.cols())};
  std::vector<double> others(n - 1);
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others[k++] = sims(i, j) / tau;
    const double lse = log_sum_exp(others);
    const double positive = dot(a.row(i), b.row(i)) / tau;
    out.value += lse - positive;
    for (std::size_t j = 0; j < n; ++j) p[j] = j == i ? 0.0 : std::exp(sims(i, j) / tau - lse);
    for (std::size_t d = 0; d < z.cols(); ++d) {
      out.grad_a(i, d) -= b(i, d) / tau;
      out.grad_b(i, d) -= a(i, d) / tau;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      for (std::size_t d = 0; d < z.cols(); ++d) {
        out.grad_a(i, d) += p[j] * a(j, d) / tau;
        out.grad_a(j, d) += p[j] * a(i, d) / tau;
      }
    }
  }
  out.grad_a = l2_normalize_rows_backward(z, out.grad_a);
  out.grad_b = l2_normalize_rows_backward(z_aug, out.grad_b);
  return out;
}

LossResult feature_distill_loss(const DenseMatrix& current, const DenseMatrix& frozen) {
  if (current.rows() != frozen.rows() || current.cols() != frozen.cols()) {
    throw ContractError("feature_distill_loss: feature shapes differ");
  }
  LossResult out{0.0, DenseMatrix(current.rows(), current.cols())};
  const auto c = current.values();
  const auto f = frozen.values();
  auto g = out.grad.values();
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double diff = c[k] - f[k];
    out.value += diff * diff;
    g[k] = 2.0 * diff;
  }
  return out;
}

}  // namespace cgid
