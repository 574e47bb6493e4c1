#include "cgid/plrd/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"

namespace cgid {

void PrototypeBank::append(std::span<const double> v) {
  if (prototypes_.cols() != 0 && v.size() != prototypes_.cols()) throw ShapeError("PrototypeBank: dimension mismatch");
  NormalizedVector n = l2_normalize(v);
  if (n.degenerate) {
    std::fill(n.values.begin(), n.values.end(), 0.0);
    n.values.front() = 1.0;
  }
  prototypes_.append_row(n.values);
}

void PrototypeBank::append_random(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(dim());
  for (std::size_t k = 0; k < count; ++k) {
    for (double& x : v) x = standard_normal(rng);
    append(v);
  }
}

void PrototypeBank::update(const DenseMatrix& projections, const DenseMatrix& q) {
  if (projections.rows() != q.rows()) throw ShapeError("PrototypeBank::update: batch size mismatch");
  if (q.cols() != size()) throw ShapeError("PrototypeBank::update: q length differs from prototype count");
  if (projections.cols() != dim()) throw ShapeError("PrototypeBank::update: projection dimension mismatch");
  std::vector<double> next(dim());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    auto qi = q.row(i);
    std::size_t j = 0;
    for (std::size_t k = 1; k < qi.size(); ++k)
      if (qi[k] > qi[j]) j = k;
    const NormalizedVector z = l2_normalize(projections.row(i));
    auto mu = prototypes_.row(j);
    for (std::size_t d = 0; d < next.size(); ++d) next[d] = gamma_ * mu[d] + (1.0 - gamma_) * z.values[d];
    const double n = norm(next);
    if (n == 0.0) continue;
    for (std::size_t d = 0; d < next.size(); ++d) mu[d] = next[d] / n;
  }
}

bool PrototypeBank::all_unit_norm(double tolerance) const {
  for (std::size_t j = 0; j < size(); ++j)
    if (std::abs(norm(prototype(j)) - 1.0) > tolerance) return false;
  return true;
}

std::vector<Label> assign_pseudo_labels(const DenseMatrix& projections, const PrototypeBank& bank, Label first,
                                        Label last) {
  if (first < 0 || last <= first || static_cast<std::size_t>(last) > bank.size()) {
    throw ContractError("assign_pseudo_labels: empty or out-of-range class range");
  }
  std::vector<Label> out(projections.rows());
  for (std::size_t i = 0; i < projections.rows(); ++i) {
    const NormalizedVector z = l2_normalize(projections.row(i));
    Label best = first;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (Label j = first; j < last; ++j) {
      const double s = dot(z.values, bank.prototype(static_cast<std::size_t>(j)));
      if (s > best_sim) {
        best_sim = s;
        best = j;
      }
    }
    out[i] = best;
  }
  return out;
}

PrototypeBank class_mean_bank(const DenseMatrix& representations, std::span<const Label> labels,
                              std::size_t num_classes, double gamma, std::uint64_t seed) {
  DenseMatrix sums(num_classes, representations.cols());
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) continue;
    const NormalizedVector z = l2_normalize(representations.row(i));
    auto s = sums.row(static_cast<std::size_t>(labels[i]));
    for (std::size_t d = 0; d < s.size(); ++d) s[d] += z.values[d];
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  PrototypeBank bank(representations.cols(), gamma);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] > 0 && norm(sums.row(c)) > 0.0) {
      bank.append(sums.row(c));
    } else {
      bank.append_random(1, derive_seed(seed, tag("empty-class"), c));
    }
  }
  return bank;
}

}  // namespace cgid
