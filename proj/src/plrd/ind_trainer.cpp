#include "cgid/plrd/ind_trainer.hpp"

#include <numeric>

#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"
#include "cgid/plrd/losses.hpp"

namespace cgid {

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive", "batch_size");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

IndTrainResult train_ind_stage(JointModel& model, const DenseMatrix& x, std::span<const Label> labels,
                               const DenseMatrix& val_x, std::span<const Label> val_labels,
                               const IndTrainConfig& config, std::uint64_t seed) {
  if (labels.size() != x.rows()) throw ShapeError("train_ind_stage: one label per row");
  if (val_labels.size() != val_x.rows()) throw ShapeError("train_ind_stage: one validation label per row");
  IndTrainResult result;
  const bool has_val = !val_labels.empty();
  result.validation_accuracy = has_val ? accuracy(model, val_x, val_labels) : 0.0;
  if (config.epochs == 0 || x.rows() == 0) return result;

  const std::size_t per_epoch = (x.rows() + config.batch_size - 1) / config.batch_size;
  SgdConfig sgd = config.optimizer;
  sgd.total_steps = per_epoch * config.epochs;
  SgdState state(sgd);
  JointModel best = model;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double total = 0.0;
    for (const auto& idx : epoch_batches(x.rows(), config.batch_size, derive_seed(seed, tag("ind-epoch"), epoch))) {
      const DenseMatrix xb = select_rows(x, idx);
      std::vector<Label> yb(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) yb[k] = labels[idx[k]];
      const auto fwd = joint_forward(model, xb, config.dropout, derive_seed(seed, tag("ind-dropout"), state.step));
      auto ce = cross_entropy(fwd.logits, yb);
      total += ce.value;
      scale_in_place(ce.grad, 1.0 / static_cast<double>(idx.size()));
      apply_sgd(model, joint_backward(model, fwd, ce.grad, {}, {}), state);
    }
    result.epoch_losses.push_back(total / static_cast<double>(x.rows()));
    if (has_val) {
      const double acc = accuracy(model, val_x, val_labels);
      if (acc > result.validation_accuracy) {
        result.validation_accuracy = acc;
        result.best_epoch = epoch;
        best = model;
      }
    }
  }
  if (has_val) {
    const auto version = model.encoder.version;
    model = std::move(best);
    model.encoder.version = version + 1;
  } else {
    result.best_epoch = config.epochs;
  }
  return result;
}

}  // namespace cgid
