#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cgid/numeric/encoder.hpp"
#include "cgid/numeric/sgd.hpp"
#include "cgid/types.hpp"

namespace cgid {

// Encoder plus a joint classifier whose rows are the old block followed by the new block.
struct JointModel {
  EncoderParams encoder;
  Linear classifier;
  std::size_t old_classes = 0;
  std::size_t new_classes = 0;
  // Copy of the encoder taken when the current stage opened; never updated during the stage.
  std::optional<EncoderParams> frozen_encoder;

  static JointModel create(const EncoderConfig& config, std::size_t initial_classes, std::uint64_t seed);

  std::size_t logit_dim() const noexcept { return old_classes + new_classes; }
};

struct JointForward {
  EncoderOutput encoder;
  DenseMatrix logits;
};

JointForward joint_forward(const JointModel& model, const DenseMatrix& x, double dropout, std::uint64_t seed);
DenseMatrix joint_logits(const JointModel& model, const DenseMatrix& x);
std::vector<Label> predict(const JointModel& model, const DenseMatrix& x);
double accuracy(const JointModel& model, const DenseMatrix& x, std::span<const Label> labels);

struct JointGrads {
  EncoderParams encoder;
  Linear classifier;
};

JointGrads zero_grads(const JointModel& model);

// Any upstream gradient may be empty (zero).
JointGrads joint_backward(const JointModel& model, const JointForward& forward, const DenseMatrix& grad_logits,
                          const DenseMatrix& grad_features, const DenseMatrix& grad_projections);

void accumulate(JointGrads& into, const JointGrads& from, double scale = 1.0);

// One SGD step on every trainable parameter; bumps the encoder version.
void apply_sgd(JointModel& model, const JointGrads& grads, SgdState& state);

std::vector<std::span<double>> parameter_spans(JointModel& model);
std::vector<std::span<const double>> parameter_spans(const JointGrads& grads, const JointModel& model);

// Appends a freshly initialized new-head block of num_new rows. The old block is untouched.
void expand_classifier(JointModel& model, std::size_t num_new, std::uint64_t seed);

// Folds the new block into the old block and drops the frozen encoder copy.
void merge_heads(JointModel& model);

void freeze_encoder_copy(JointModel& model);

}  // namespace cgid
