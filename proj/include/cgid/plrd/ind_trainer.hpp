#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cgid/numeric/sgd.hpp"
#include "cgid/plrd/model.hpp"

namespace cgid {

// Shuffled index batches covering [0, n) once; the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed);

struct IndTrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double dropout = 0.1;
  SgdConfig optimizer{.peak_lr = 0.05};
};

struct IndTrainResult {
  double validation_accuracy = 0.0;  // of the retained model
  std::size_t best_epoch = 0;        // 0 means the initial model was kept
  std::vector<double> epoch_losses;
};

// Cross-entropy training; keeps the parameters with the best validation accuracy (earliest on ties).
// Without validation data the final parameters are kept.
IndTrainResult train_ind_stage(JointModel& model, const DenseMatrix& x, std::span<const Label> labels,
                               const DenseMatrix& val_x, std::span<const Label> val_labels,
                               const IndTrainConfig& config, std::uint64_t seed);

}  // namespace cgid
