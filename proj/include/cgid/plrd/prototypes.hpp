#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cgid/numeric/matrix.hpp"
#include "cgid/types.hpp"

namespace cgid {

// One unit-norm prototype per known class, updated by a sample-wise moving average.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  PrototypeBank(std::size_t dim, double gamma) : prototypes_(0, dim), gamma_(gamma) {}

  // Restores a bank verbatim, e.g. from a checkpoint.
  static PrototypeBank from_matrix(DenseMatrix prototypes, double gamma) {
    PrototypeBank bank;
    bank.prototypes_ = std::move(prototypes);
    bank.gamma_ = gamma;
    return bank;
  }

  std::size_t size() const noexcept { return prototypes_.rows(); }
  std::size_t dim() const noexcept { return prototypes_.cols(); }
  double gamma() const noexcept { return gamma_; }
  void set_gamma(double gamma) noexcept { gamma_ = gamma; }

  const DenseMatrix& matrix() const noexcept { return prototypes_; }
  std::span<const double> prototype(std::size_t j) const { return prototypes_.row(j); }

  // Appends v normalized; a zero vector is replaced by the first basis vector.
  void append(std::span<const double> v);
  void append_random(std::size_t count, std::uint64_t seed);

  // For each row i in order: j = argmax q_i (lowest index on ties),
  // μ_j <- normalize(γ μ_j + (1-γ) ẑ_i) with ẑ_i the normalized projection.
  void update(const DenseMatrix& projections, const DenseMatrix& q);

  bool all_unit_norm(double tolerance = 1e-9) const;

  bool operator==(const PrototypeBank&) const = default;

 private:
  DenseMatrix prototypes_;
  double gamma_ = 0.7;
};

// Nearest prototype by cosine similarity among ids [first, last); ties go to the lowest id.
std::vector<Label> assign_pseudo_labels(const DenseMatrix& projections, const PrototypeBank& bank, Label first,
                                        Label last);

// Bank of normalized class means of `representations` for ids [0, num_classes); classes without
// samples get a random unit vector.
PrototypeBank class_mean_bank(const DenseMatrix& representations, std::span<const Label> labels,
                              std::size_t num_classes, double gamma, std::uint64_t seed);

}  // namespace cgid
