#include <algorithm>

#include "cgid/baselines/baselines.hpp"
#include "cgid/cluster/hungarian.hpp"
#include "cgid/cluster/kmeans.hpp"
#include "cgid/errors.hpp"
#include "cgid/numeric/log.hpp"
#include "cgid/numeric/rng.hpp"
#include "cgid/plrd/ind_trainer.hpp"

namespace cgid {

BaselineMethod parse_baseline_method(const std::string& name) {
  if (name == "kmeans") return BaselineMethod::kmeans;
  if (name == "deepaligned") return BaselineMethod::deepaligned;
  if (name == "e2e") return BaselineMethod::e2e;
  throw ConfigError("unknown baseline '" + name + "'");
}

std::string to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::kmeans: return "kmeans";
    case BaselineMethod::deepaligned: return "deepaligned";
    case BaselineMethod::e2e: return "e2e";
  }
  return "kmeans";
}

void BaselineConfig::validate(bool allow_zero_replay) const {
  const bool pipeline = method != BaselineMethod::e2e;
  if (replay_weight < 0.0 || (pipeline && !allow_zero_replay && !(replay_weight > 0.0))) {
    throw ConfigError("replay weight must be positive for pipeline methods", "baseline.replay_weight");
  }
  if (heads != 1) throw ConfigError("only a single clustering head is supported", "baseline.heads");
  if (batch_size == 0) throw ConfigError("batch size must be positive", "baseline.batch_size");
  if (method == BaselineMethod::deepaligned && align_rounds == 0) {
    throw ConfigError("at least one alignment round is required", "baseline.align_rounds");
  }
}

namespace {

// One pass of λ-weighted cross-entropy over new (pseudo-labeled) and replayed samples.
double replay_ce_epoch(LearnerState& state, const DenseMatrix& new_data, std::span<const Label> pseudo,
                       const BaselineConfig& config, std::uint64_t seed, SgdState& opt, BaselineLog& log,
                       const StageObserver& observer) {
  double total = 0.0;
  std::size_t samples = 0;
  for (const auto& idx : epoch_batches(new_data.rows(), config.batch_size, seed)) {
    const MixedBatch batch = assemble_batch(new_data, idx, state.memory, derive_seed(seed, tag("replay"), opt.step));
    std::vector<Label> labels(batch.size());
    std::vector<double> weights(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const bool old = batch.origin[i] == Origin::old_sample;
      labels[i] = old ? batch.old_labels[i] : pseudo[batch.source[i]];
      weights[i] = old ? config.replay_weight : 1.0;
    }
    const auto fwd = joint_forward(state.model, batch.inputs, config.dropout,
                                   derive_seed(seed, tag("pipeline-dropout"), opt.step));
    auto ce = cross_entropy(fwd.logits, labels, weights);
    scale_in_place(ce.grad, 1.0 / static_cast<double>(batch.size()));
    apply_sgd(state.model, joint_backward(state.model, fwd, ce.grad, {}, {}), opt);
    total += ce.value;
    samples += batch.size();
    ++log.batches;
    if (observer.on_batch) observer.on_batch(state, LossBreakdown{ce.value, 0.0, 0.0, 0.0, ce.value});
  }
  return samples > 0 ? total / static_cast<double>(samples) : 0.0;
}

std::vector<Label> offset_labels(const std::vector<std::size_t>& clusters, std::size_t offset) {
  std::vector<Label> out(clusters.size());
  for (std::size_t i = 0; i < clusters.size(); ++i) out[i] = static_cast<Label>(clusters[i] + offset);
  return out;
}

SgdState stage_optimizer(const BaselineConfig& config, std::size_t rows, std::size_t epochs) {
  SgdConfig sgd = config.optimizer;
  sgd.total_steps = std::max<std::size_t>(1, (rows + config.batch_size - 1) / config.batch_size * epochs);
  return SgdState(sgd);
}

bool open_baseline_stage(LearnerState& state, std::size_t num_new, BaselineLog& log, std::uint64_t seed,
                         const StageObserver& observer) {
  log.stage = state.stage + 1;
  log.new_classes = num_new;
  if (num_new == 0) {
    ++state.stage;
    if (observer.on_closed) observer.on_closed(state);
    return false;
  }
  expand_classifier(state.model, num_new, derive_seed(seed, tag("expand")));
  freeze_encoder_copy(state.model);
  if (observer.on_expanded) observer.on_expanded(state);
  return true;
}

}  // namespace

void close_baseline_stage(LearnerState& state, const DenseMatrix& new_data, std::span<const Label> pseudo_labels,
                          const BaselineConfig& config, std::uint64_t seed) {
  JointModel& model = state.model;
  if (model.new_classes > 0 && new_data.rows() > 0) {
    const DenseMatrix proj = encoder_forward(model.encoder, new_data, 0.0, 0).projections;
    const PrototypeBank means =
        class_mean_bank(proj, pseudo_labels, model.logit_dim(), 0.0, derive_seed(seed, tag("baseline-means")));
    state.memory.store(memory_select(new_data, pseudo_labels, config.memory_per_class, config.selection, &proj, &means,
                                     derive_seed(seed, tag("stage-memory")), state.stage + 1));
  }
  merge_heads(model);
  ++state.stage;
}

BaselineLog run_kmeans_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                             const BaselineConfig& config, std::uint64_t seed, const StageObserver& observer) {
  BaselineLog log;
  if (!open_baseline_stage(state, num_new, log, seed, observer)) return log;
  const std::size_t known_old = state.model.old_classes;

  const auto clusters = kmeans(encoder_features(state.model.encoder, new_data), num_new, config.kmeans_iterations,
                               derive_seed(seed, tag("pipeline-kmeans")));
  log.empty_reseeds = clusters.empty_reseeds;
  log.pseudo_labels = offset_labels(clusters.assignments, known_old);

  SgdState opt = stage_optimizer(config, new_data.rows(), config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    log.epoch_losses.push_back(replay_ce_epoch(state, new_data, log.pseudo_labels, config,
                                               derive_seed(seed, tag("kmeans-epoch"), epoch), opt, log, observer));
  }
  close_baseline_stage(state, new_data, log.pseudo_labels, config, seed);
  if (observer.on_closed) observer.on_closed(state);
  return log;
}

BaselineLog run_deepaligned_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                                  const BaselineConfig& config, std::uint64_t seed, const StageObserver& observer) {
  BaselineLog log;
  if (!open_baseline_stage(state, num_new, log, seed, observer)) return log;
  const std::size_t known_old = state.model.old_classes;
  const std::size_t rounds = std::max<std::size_t>(1, config.align_rounds);
  // Epochs are spread over the rounds; earlier rounds take the remainder.
  SgdState opt = stage_optimizer(config, new_data.rows(), config.epochs);
  DenseMatrix previous;
  std::size_t epoch = 0;

  for (std::size_t round = 0; round < rounds; ++round) {
    auto clusters = kmeans(encoder_features(state.model.encoder, new_data), num_new, config.kmeans_iterations,
                           derive_seed(seed, tag("pipeline-kmeans")));
    if (clusters.empty_reseeds > 0) {
      log::info("deepaligned round " + std::to_string(round) + ": re-seeded " +
                std::to_string(clusters.empty_reseeds) + " empty clusters");
    }
    log.empty_reseeds += clusters.empty_reseeds;
    if (round > 0) {
      const AssignmentMap map = align_centroids(previous, clusters.centroids);
      std::vector<Label> to_previous(num_new);
      for (std::size_t c = 0; c < num_new; ++c) to_previous[c] = map.map(static_cast<Label>(c));
      DenseMatrix reordered(num_new, clusters.centroids.cols());
      for (std::size_t c = 0; c < num_new; ++c) {
        auto src = clusters.centroids.row(c);
        std::copy(src.begin(), src.end(), reordered.row(static_cast<std::size_t>(to_previous[c])).begin());
      }
      for (auto& a : clusters.assignments) a = static_cast<std::size_t>(to_previous[a]);
      clusters.centroids = std::move(reordered);
      log.alignments.push_back(std::move(to_previous));
    }
    previous = clusters.centroids;
    log.pseudo_labels = offset_labels(clusters.assignments, known_old);

    const std::size_t round_epochs = config.epochs / rounds + (round < config.epochs % rounds ? 1 : 0);
    for (std::size_t e = 0; e < round_epochs; ++e, ++epoch) {
      log.epoch_losses.push_back(replay_ce_epoch(state, new_data, log.pseudo_labels, config,
                                                 derive_seed(seed, tag("deepaligned-epoch"), epoch), opt, log,
                                                 observer));
    }
  }
  close_baseline_stage(state, new_data, log.pseudo_labels, config, seed);
  if (observer.on_closed) observer.on_closed(state);
  return log;
}

BaselineLog run_baseline_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                               const BaselineConfig& config, std::uint64_t seed, const StageObserver& observer) {
  switch (config.method) {
    case BaselineMethod::kmeans: return run_kmeans_stage(state, new_data, num_new, config, seed, observer);
    case BaselineMethod::deepaligned: return run_deepaligned_stage(state, new_data, num_new, config, seed, observer);
    case BaselineMethod::e2e: return run_e2e_stage(state, new_data, num_new, config, seed, observer);
  }
  return {};
}

}  // namespace cgid
