#include "cgid/plrd/plrd_trainer.hpp"

#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"
#include "cgid/plrd/ind_trainer.hpp"
#include "cgid/plrd/losses.hpp"

namespace cgid {

namespace {

DenseMatrix clean_projections(const EncoderParams& encoder, const DenseMatrix& x) {
  return encoder_forward(encoder, x, 0.0, 0).projections;
}

DenseMatrix column_block(const DenseMatrix& m, std::span<const std::size_t> rows, std::size_t first,
                         std::size_t count) {
  DenseMatrix out(rows.size(), count);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = m(rows[i], first + j);
  return out;
}

}  // namespace

PlrdTargets plrd_targets(const JointModel& model, const PrototypeBank& bank, const MixedBatch& batch,
                         const PlrdConfig& config) {
  if (bank.size() != model.logit_dim()) throw ContractError("plrd_targets: one prototype per known class required");
  if (!model.frozen_encoder) throw ContractError("plrd_targets: stage is not open");
  const std::size_t known_old = model.old_classes;
  const std::size_t k_new = model.new_classes;
  const JointForward fwd = joint_forward(model, batch.inputs, 0.0, 0);
  const auto new_rows = batch.rows(Origin::new_sample);

  PlrdTargets t;
  t.q = compute_q(batch, column_block(fwd.logits, new_rows, known_old, k_new), known_old, config.sinkhorn_epsilon,
                  config.sinkhorn_iterations);
  t.ce_labels = batch.old_labels;
  if (!new_rows.empty()) {
    const auto pseudo = assign_pseudo_labels(select_rows(fwd.encoder.projections, new_rows), bank,
                                             static_cast<Label>(known_old), static_cast<Label>(known_old + k_new));
    for (std::size_t k = 0; k < new_rows.size(); ++k) t.ce_labels[new_rows[k]] = pseudo[k];
  }
  t.old_rows = batch.rows(Origin::old_sample);
  if (!t.old_rows.empty()) t.frozen_features = encoder_features(*model.frozen_encoder, select_rows(batch.inputs, t.old_rows));
  return t;
}

PlrdLoss plrd_loss(const JointModel& model, const PrototypeBank& bank, const MixedBatch& batch,
                   const PlrdTargets& targets, const PlrdConfig& config, std::uint64_t dropout_seed,
                   double grad_scale) {
  const LossWeights& w = config.weights;
  const std::size_t n = batch.size();
  const JointForward fwd = joint_forward(model, batch.inputs, 0.0, 0);

  PlrdLoss out;
  auto& b = out.breakdown;
  DenseMatrix grad_logits(n, model.logit_dim());
  DenseMatrix grad_features(n, model.encoder.feature_dim());
  DenseMatrix grad_proj(n, model.encoder.projection_dim());

  const auto ce = cross_entropy(fwd.logits, targets.ce_labels);
  b.ce = ce.value;
  add_scaled(grad_logits, ce.grad, w.ce * grad_scale);

  const auto pcl = pcl_loss(fwd.encoder.projections, bank.matrix(), targets.q, config.tau);
  b.pcl = pcl.value;
  add_scaled(grad_proj, pcl.grad, w.pcl * grad_scale);

  if (!targets.old_rows.empty()) {
    const auto fd = feature_distill_loss(select_rows(fwd.encoder.features, targets.old_rows), targets.frozen_features);
    b.fd = fd.value;
    for (std::size_t k = 0; k < targets.old_rows.size(); ++k)
      for (std::size_t d = 0; d < fd.grad.cols(); ++d)
        grad_features(targets.old_rows[k], d) += w.fd * grad_scale * fd.grad(k, d);
  }

  out.grads = zero_grads(model);
  if (n >= 2) {
    const JointForward aug = joint_forward(model, batch.inputs, config.dropout, dropout_seed);
    const auto ins = instance_cl_loss(fwd.encoder.projections, aug.encoder.projections, config.tau);
    b.ins = ins.value;
    add_scaled(grad_proj, ins.grad_a, w.ins * grad_scale);
    DenseMatrix aug_proj = ins.grad_b;
    scale_in_place(aug_proj, w.ins * grad_scale);
    accumulate(out.grads, joint_backward(model, aug, {}, {}, aug_proj));
  }
  accumulate(out.grads, joint_backward(model, fwd, grad_logits, grad_features, grad_proj));

  b.total = w.ce * b.ce + w.pcl * b.pcl + w.ins * b.ins + w.fd * b.fd;
  out.projections = fwd.encoder.projections;
  return out;
}

void close_ind_stage(LearnerState& state, const DenseMatrix& x, std::span<const Label> labels,
                     std::size_t memory_per_class, SelectionStrategy selection, std::uint64_t seed) {
  state.memory = ReplayMemory(memory_per_class);
  const DenseMatrix proj = clean_projections(state.model.encoder, x);
  const PrototypeBank means =
      class_mean_bank(proj, labels, state.model.old_classes, 0.0, derive_seed(seed, tag("ind-means")));
  const auto entries = memory_select(x, labels, memory_per_class, selection, &proj, &means,
                                     derive_seed(seed, tag("ind-memory")), 0);
  state.memory.store(entries);
  state.stage = 0;
}

void open_stage(LearnerState& state, std::size_t num_new, const PlrdConfig& config, std::uint64_t seed) {
  JointModel& model = state.model;
  expand_classifier(model, num_new, derive_seed(seed, tag("expand")));
  freeze_encoder_copy(model);

  const std::size_t dim = model.encoder.projection_dim();
  if (state.bank.dim() != dim) state.bank = PrototypeBank(dim, config.gamma);
  state.bank.set_gamma(config.gamma);
  if (state.bank.size() < model.old_classes && state.memory.empty()) {
    state.bank.append_random(model.old_classes - state.bank.size(), derive_seed(seed, tag("old-prototypes")));
  } else if (state.bank.size() < model.old_classes) {
    const PrototypeBank means = class_mean_bank(clean_projections(model.encoder, state.memory.inputs()),
                                                state.memory.labels(), model.old_classes, config.gamma,
                                                derive_seed(seed, tag("old-prototypes")));
    for (std::size_t j = state.bank.size(); j < model.old_classes; ++j) state.bank.append(means.prototype(j));
  }
  state.bank.append_random(num_new, derive_seed(seed, tag("new-prototypes")));
}

void close_stage(LearnerState& state, const DenseMatrix& new_data, const PlrdConfig& config, std::uint64_t seed) {
  JointModel& model = state.model;
  if (model.new_classes > 0 && new_data.rows() > 0) {
    const DenseMatrix proj = clean_projections(model.encoder, new_data);
    const auto labels = assign_pseudo_labels(proj, state.bank, static_cast<Label>(model.old_classes),
                                             static_cast<Label>(model.logit_dim()));
    state.memory.store(memory_select(new_data, labels, config.memory_per_class, config.selection, &proj, &state.bank,
                                     derive_seed(seed, tag("stage-memory")), state.stage + 1));
  }
  merge_heads(model);
  ++state.stage;
}

StageLog train_ood_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                         const PlrdConfig& config, std::uint64_t seed, const StageObserver& observer) {
  StageLog log;
  log.stage = state.stage + 1;
  log.new_classes = num_new;
  if (num_new == 0) {
    ++state.stage;
    if (observer.on_closed) observer.on_closed(state);
    return log;
  }
  open_stage(state, num_new, config, seed);
  if (observer.on_expanded) observer.on_expanded(state);

  const std::size_t per_epoch = (new_data.rows() + config.batch_size - 1) / config.batch_size;
  SgdConfig sgd = config.optimizer;
  sgd.total_steps = std::max<std::size_t>(1, per_epoch * config.epochs);
  SgdState opt(sgd);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    LossBreakdown sums;
    std::size_t samples = 0;
    for (const auto& idx : epoch_batches(new_data.rows(), config.batch_size, derive_seed(seed, tag("ood-epoch"), epoch))) {
      const MixedBatch batch = assemble_batch(new_data, idx, state.memory, derive_seed(seed, tag("replay"), opt.step));
      const PlrdTargets targets = plrd_targets(state.model, state.bank, batch, config);
      const PlrdLoss loss = plrd_loss(state.model, state.bank, batch, targets, config,
                                      derive_seed(seed, tag("ood-dropout"), opt.step),
                                      1.0 / static_cast<double>(batch.size()));
      state.bank.update(loss.projections, targets.q);
      apply_sgd(state.model, loss.grads, opt);
      ++log.batches;
      samples += batch.size();
      sums.ce += loss.breakdown.ce;
      sums.pcl += loss.breakdown.pcl;
      sums.ins += loss.breakdown.ins;
      sums.fd += loss.breakdown.fd;
      sums.total += loss.breakdown.total;
      if (observer.on_batch) observer.on_batch(state, loss.breakdown);
    }
    const double denom = samples > 0 ? static_cast<double>(samples) : 1.0;
    log.epoch_means.push_back({sums.ce / denom, sums.pcl / denom, sums.ins / denom, sums.fd / denom, sums.total / denom});
  }
  close_stage(state, new_data, config, seed);
  if (observer.on_closed) observer.on_closed(state);
  return log;
}

}  // namespace cgid
