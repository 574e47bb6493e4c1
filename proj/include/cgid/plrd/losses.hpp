#pragma once

#include <span>

#include "cgid/numeric/matrix.hpp"
#include "cgid/types.hpp"

namespace cgid {

struct LossResult {
  double value = 0.0;
  DenseMatrix grad;
};

struct PairLossResult {
  double value = 0.0;
  DenseMatrix grad_a;
  DenseMatrix grad_b;
};

// Σ_i w_i · −Σ_k t_ik log softmax(l_i / T)_k. Empty `weights` means 1 for every row.
LossResult cross_entropy(const DenseMatrix& logits, const DenseMatrix& targets, std::span<const double> weights = {},
                         double temperature = 1.0);
LossResult cross_entropy(const DenseMatrix& logits, std::span<const Label> labels, std::span<const double> weights = {},
                         double temperature = 1.0);

// Prototypical contrastive loss over cosine similarities to every prototype; the gradient is taken
// with respect to the raw projections. Prototypes are constants.
LossResult pcl_loss(const DenseMatrix& projections, const DenseMatrix& prototypes, const DenseMatrix& q, double tau);

// −Σ_i log[ exp(sim(z_i, ẑ_i)/τ) / Σ_{j≠i} exp(sim(z_i, z_j)/τ) ] with cosine sim.
// grad_a is w.r.t. z, grad_b w.r.t. the augmented view ẑ.
PairLossResult instance_cl_loss(const DenseMatrix& z, const DenseMatrix& z_aug, double tau);

// Σ (f − f_init)²; gradient 2(f − f_init) w.r.t. the current features.
LossResult feature_distill_loss(const DenseMatrix& current, const DenseMatrix& frozen);

DenseMatrix softmax_rows(const DenseMatrix& logits, double temperature = 1.0);

}  // namespace cgid
