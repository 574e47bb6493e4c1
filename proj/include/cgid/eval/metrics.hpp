#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cgid/numeric/matrix.hpp"
#include "cgid/types.hpp"

namespace cgid {

// a[t][i]: accuracy on class set Y_i after stage t, defined for i <= t.
class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::vector<std::size_t> class_sizes);

  std::size_t num_sets() const noexcept { return sizes_.size(); }
  std::size_t filled_stages() const noexcept { return rows_.size(); }
  const std::vector<std::size_t>& class_sizes() const noexcept { return sizes_; }

  // Appends the row for the next stage; it must have filled_stages() + 1 entries in [0, 1].
  void push_row(std::vector<double> row);
  const std::vector<double>& row(std::size_t t) const;
  double at(std::size_t t, std::size_t i) const;

  // Sum of |Y_i| for i in [first, last].
  std::size_t class_total(std::size_t first, std::size_t last) const;

  bool operator==(const AccuracyMatrix&) const = default;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::vector<double>> rows_;
};

struct CgidAccuracy {
  double ind = 0.0;
  double ood = 0.0;
  double all = 0.0;
};

struct CgidForgetting {
  double ind = 0.0;
  double ood = 0.0;
  double all = 0.0;
};

struct LossGain {
  double loss = 0.0;
  double gain = 0.0;
};

// Requires t >= 1 (A^OOD is undefined at the IND stage); throws ContractError otherwise.
CgidAccuracy cgid_accuracy(const AccuracyMatrix& a, std::size_t t);
double ind_accuracy(const AccuracyMatrix& a, std::size_t t);
double all_accuracy(const AccuracyMatrix& a, std::size_t t);

// Requires t >= 1. Negative values (backward transfer) are returned as-is.
CgidForgetting cgid_forgetting(const AccuracyMatrix& a, std::size_t t);

// Throws MetricError when A^IND_0 is 0.
LossGain loss_gain(const AccuracyMatrix& a, std::size_t t);

// Mean pairwise distance between class centroids over mean pairwise distance within classes,
// restricted to `classes`. Throws ContractError for a class with fewer than 2 samples.
// Returns 0 when both distances are 0 or fewer than two classes are present.
double compactness(const DenseMatrix& features, std::span<const Label> labels, std::span<const Label> classes);

}  // namespace cgid
