#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cgid/numeric/sgd.hpp"
#include "cgid/plrd/memory.hpp"
#include "cgid/plrd/state.hpp"

namespace cgid {

struct LossWeights {
  double ce = 1.0;
  double pcl = 1.0;
  double ins = 1.0;
  double fd = 1.0;

  bool operator==(const LossWeights&) const = default;
};

struct PlrdConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 32;  // new samples per batch; the same number is replayed
  double dropout = 0.5;  // augmentation view for the instance loss
  double tau = 0.5;
  double gamma = 0.7;
  double sinkhorn_epsilon = 0.05;
  std::size_t sinkhorn_iterations = 3;
  LossWeights weights;
  SgdConfig optimizer{.peak_lr = 0.01};
  std::size_t memory_per_class = 5;
  SelectionStrategy selection = SelectionStrategy::random;
};

struct LossBreakdown {
  double ce = 0.0;
  double pcl = 0.0;
  double ins = 0.0;
  double fd = 0.0;
  double total = 0.0;  // weighted sum of the four terms
};

// Per-batch quantities that are not differentiated: Q, CE labels and the frozen-encoder features.
struct PlrdTargets {
  DenseMatrix q;
  std::vector<Label> ce_labels;
  std::vector<std::size_t> old_rows;
  DenseMatrix frozen_features;  // one row per entry of old_rows
};

PlrdTargets plrd_targets(const JointModel& model, const PrototypeBank& bank, const MixedBatch& batch,
                         const PlrdConfig& config);

struct PlrdLoss {
  LossBreakdown breakdown;
  JointGrads grads;
  DenseMatrix projections;  // clean view, for the prototype update
};

// Losses are sums over the batch; gradients are multiplied by `grad_scale`.
PlrdLoss plrd_loss(const JointModel& model, const PrototypeBank& bank, const MixedBatch& batch,
                   const PlrdTargets& targets, const PlrdConfig& config, std::uint64_t dropout_seed,
                   double grad_scale = 1.0);

struct StageObserver {
  std::function<void(const LearnerState&)> on_expanded;
  std::function<void(const LearnerState&, const LossBreakdown&)> on_batch;
  std::function<void(const LearnerState&)> on_closed;
};

struct StageLog {
  std::size_t stage = 0;
  std::size_t new_classes = 0;
  std::size_t batches = 0;
  std::vector<LossBreakdown> epoch_means;  // per-sample means of each term
};

// Fills memory from labeled IND data and leaves the bank empty; IND prototypes are built when
// the first OOD stage opens.
void close_ind_stage(LearnerState& state, const DenseMatrix& x, std::span<const Label> labels,
                     std::size_t memory_per_class, SelectionStrategy selection, std::uint64_t seed);

// Expands the head, snapshots the encoder, and grows the bank to cover every known class.
void open_stage(LearnerState& state, std::size_t num_new, const PlrdConfig& config, std::uint64_t seed);

// Pseudo-labels the stage data by nearest new prototype, stores n per class, merges heads.
void close_stage(LearnerState& state, const DenseMatrix& new_data, const PlrdConfig& config, std::uint64_t seed);

StageLog train_ood_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                         const PlrdConfig& config, std::uint64_t seed, const StageObserver& observer = {});

}  // namespace cgid
