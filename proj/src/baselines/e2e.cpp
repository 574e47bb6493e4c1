#include <algorithm>

#include "cgid/baselines/baselines.hpp"
#include "cgid/cluster/sinkhorn.hpp"
#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"
#include "cgid/plrd/ind_trainer.hpp"

namespace cgid {

PairLossResult swapped_prediction_loss(const DenseMatrix& logits_a, const DenseMatrix& logits_b,
                                       const DenseMatrix& q_a, const DenseMatrix& q_b, double temperature) {
  const auto b_from_a = cross_entropy(logits_b, q_a, {}, temperature);
  const auto a_from_b = cross_entropy(logits_a, q_b, {}, temperature);
  return {b_from_a.value + a_from_b.value, a_from_b.grad, b_from_a.grad};
}

DenseMatrix e2e_targets(const DenseMatrix& logits, std::size_t known_old, std::size_t num_new, double epsilon,
                        std::size_t iterations) {
  if (logits.cols() != known_old + num_new) throw ShapeError("e2e_targets: logit width mismatch");
  DenseMatrix out(logits.rows(), logits.cols());
  if (logits.rows() == 0 || num_new == 0) return out;
  DenseMatrix block(logits.rows(), num_new);
  for (std::size_t i = 0; i < logits.rows(); ++i)
    for (std::size_t j = 0; j < num_new; ++j) block(i, j) = logits(i, known_old + j);
  const DenseMatrix q = sinkhorn_calibrate(block, epsilon, iterations).assignment;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < num_new; ++j) s += q(i, j);
    for (std::size_t j = 0; j < num_new; ++j) out(i, known_old + j) = q(i, j) / s;
  }
  return out;
}

BaselineLog run_e2e_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                          const BaselineConfig& config, std::uint64_t seed, const StageObserver& observer) {
  BaselineLog log;
  log.stage = state.stage + 1;
  log.new_classes = num_new;
  if (num_new == 0) {
    ++state.stage;
    if (observer.on_closed) observer.on_closed(state);
    return log;
  }
  JointModel& model = state.model;
  expand_classifier(model, num_new, derive_seed(seed, tag("expand")));
  freeze_encoder_copy(model);
  if (observer.on_expanded) observer.on_expanded(state);
  const std::size_t known_old = model.old_classes;

  SgdConfig sgd = config.optimizer;
  sgd.total_steps =
      std::max<std::size_t>(1, (new_data.rows() + config.batch_size - 1) / config.batch_size * config.epochs);
  SgdState opt(sgd);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    std::size_t samples = 0;
    for (const auto& idx : epoch_batches(new_data.rows(), config.batch_size, derive_seed(seed, tag("e2e-epoch"), epoch))) {
      const MixedBatch batch = assemble_batch(new_data, idx, state.memory, derive_seed(seed, tag("replay"), opt.step));
      const auto view_a = joint_forward(model, batch.inputs, config.dropout, derive_seed(seed, tag("e2e-view-a"), opt.step));
      const auto view_b = joint_forward(model, batch.inputs, config.dropout, derive_seed(seed, tag("e2e-view-b"), opt.step));
      const auto new_rows = batch.rows(Origin::new_sample);
      const auto old_rows = batch.rows(Origin::old_sample);
      const double scale = 1.0 / static_cast<double>(batch.size());

      DenseMatrix grad_a(batch.size(), model.logit_dim());
      DenseMatrix grad_b(batch.size(), model.logit_dim());
      double value = 0.0;
      if (!new_rows.empty()) {
        const DenseMatrix la = select_rows(view_a.logits, new_rows);
        const DenseMatrix lb = select_rows(view_b.logits, new_rows);
        const auto swapped = swapped_prediction_loss(
            la, lb, e2e_targets(la, known_old, num_new, config.sinkhorn_epsilon, config.sinkhorn_iterations),
            e2e_targets(lb, known_old, num_new, config.sinkhorn_epsilon, config.sinkhorn_iterations),
            config.e2e_temperature);
        value += swapped.value;
        for (std::size_t k = 0; k < new_rows.size(); ++k) {
          for (std::size_t j = 0; j < model.logit_dim(); ++j) {
            grad_a(new_rows[k], j) += scale * swapped.grad_a(k, j);
            grad_b(new_rows[k], j) += scale * swapped.grad_b(k, j);
          }
        }
      }
      if (!old_rows.empty()) {
        std::vector<Label> labels(old_rows.size());
        for (std::size_t k = 0; k < old_rows.size(); ++k) labels[k] = batch.old_labels[old_rows[k]];
        const std::vector<double> weights(old_rows.size(), config.replay_weight);
        const auto ce = cross_entropy(select_rows(view_a.logits, old_rows), labels, weights, config.e2e_temperature);
        value += ce.value;
        for (std::size_t k = 0; k < old_rows.size(); ++k)
          for (std::size_t j = 0; j < model.logit_dim(); ++j) grad_a(old_rows[k], j) += scale * ce.grad(k, j);
      }
      JointGrads grads = joint_backward(model, view_a, grad_a, {}, {});
      accumulate(grads, joint_backward(model, view_b, grad_b, {}, {}));
      apply_sgd(model, grads, opt);
      total += value;
      samples += batch.size();
      ++log.batches;
      if (observer.on_batch) observer.on_batch(state, LossBreakdown{value, 0.0, 0.0, 0.0, value});
    }
    log.epoch_losses.push_back(samples > 0 ? total / static_cast<double>(samples) : 0.0);
  }

  const DenseMatrix logits = joint_logits(model, new_data);
  log.pseudo_labels.resize(new_data.rows());
  for (std::size_t i = 0; i < new_data.rows(); ++i) {
    auto r = logits.row(i).subspan(known_old, num_new);
    log.pseudo_labels[i] = static_cast<Label>(known_old + (std::max_element(r.begin(), r.end()) - r.begin()));
  }
  close_baseline_stage(state, new_data, log.pseudo_labels, config, seed);
  if (observer.on_closed) observer.on_closed(state);
  return log;
}

}  // namespace cgid
