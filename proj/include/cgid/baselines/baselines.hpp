#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cgid/numeric/sgd.hpp"
#include "cgid/plrd/losses.hpp"
#include "cgid/plrd/plrd_trainer.hpp"
#include "cgid/plrd/state.hpp"

namespace cgid {

enum class BaselineMethod { kmeans, deepaligned, e2e };

BaselineMethod parse_baseline_method(const std::string& name);
std::string to_string(BaselineMethod m);

struct BaselineConfig {
  BaselineMethod method = BaselineMethod::kmeans;
  double replay_weight = 3.0;  // λ on the cross-entropy of replayed samples
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double dropout = 0.1;
  SgdConfig optimizer{.peak_lr = 0.01};
  std::size_t kmeans_iterations = 100;
  std::size_t align_rounds = 5;  // DeepAligned re-clustering rounds; epochs are split across them
  double e2e_temperature = 0.1;
  double sinkhorn_epsilon = 0.05;
  std::size_t sinkhorn_iterations = 3;
  std::size_t heads = 1;  // E2E clustering heads; only 1 is implemented
  std::size_t memory_per_class = 5;
  SelectionStrategy selection = SelectionStrategy::random;

  // Throws ConfigError when λ is not positive for a pipeline method (unless allow_zero_replay) or heads != 1.
  void validate(bool allow_zero_replay = false) const;
};

struct BaselineLog {
  std::size_t stage = 0;
  std::size_t new_classes = 0;
  std::size_t batches = 0;
  std::vector<double> epoch_losses;         // per-sample mean
  std::vector<Label> pseudo_labels;         // final pseudo-label per stage sample (global ids)
  std::size_t empty_reseeds = 0;            // k-means empty-cluster events over all rounds
  std::vector<std::vector<Label>> alignments;  // DeepAligned: round r>0 map from new to previous cluster index
};

// Swapped prediction: CE(logits_b, q_a) + CE(logits_a, q_b) at the given temperature.
// grad_a is w.r.t. logits_a and grad_b w.r.t. logits_b; targets are constants.
PairLossResult swapped_prediction_loss(const DenseMatrix& logits_a, const DenseMatrix& logits_b,
                                       const DenseMatrix& q_a, const DenseMatrix& q_b, double temperature);

// Calibrated soft targets over the full logit width: zeros on the old block, Sinkhorn on the new block.
DenseMatrix e2e_targets(const DenseMatrix& logits, std::size_t known_old, std::size_t num_new, double epsilon,
                        std::size_t iterations);

BaselineLog run_kmeans_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                             const BaselineConfig& config, std::uint64_t seed, const StageObserver& observer = {});
BaselineLog run_deepaligned_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                                  const BaselineConfig& config, std::uint64_t seed,
                                  const StageObserver& observer = {});
BaselineLog run_e2e_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                          const BaselineConfig& config, std::uint64_t seed, const StageObserver& observer = {});

BaselineLog run_baseline_stage(LearnerState& state, const DenseMatrix& new_data, std::size_t num_new,
                               const BaselineConfig& config, std::uint64_t seed, const StageObserver& observer = {});

// Stores n per class by the given pseudo-labels, merges heads and advances the stage counter.
void close_baseline_stage(LearnerState& state, const DenseMatrix& new_data, std::span<const Label> pseudo_labels,
                          const BaselineConfig& config, std::uint64_t seed);

}  // namespace cgid
