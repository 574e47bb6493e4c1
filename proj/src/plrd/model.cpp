#include "cgid/plrd/model.hpp"

#include <algorithm>

#include "cgid/errors.hpp"
#include "cgid/numeric/rng.hpp"

namespace cgid {

JointModel JointModel::create(const EncoderConfig& config, std::size_t initial_classes, std::uint64_t seed) {
  JointModel m;
  m.encoder = EncoderParams::init(config, derive_seed(seed, tag("encoder")));
  m.classifier = Linear::uniform_init(config.feature_dim, initial_classes, derive_seed(seed, tag("classifier")));
  m.old_classes = initial_classes;
  return m;
}

JointForward joint_forward(const JointModel& model, const DenseMatrix& x, double dropout, std::uint64_t seed) {
  JointForward out{encoder_forward(model.encoder, x, dropout, seed), {}};
  out.logits = model.classifier.forward(out.encoder.features);
  return out;
}

DenseMatrix joint_logits(const JointModel& model, const DenseMatrix& x) {
  return model.classifier.forward(encoder_features(model.encoder, x));
}

std::vector<Label> predict(const JointModel& model, const DenseMatrix& x) {
  const DenseMatrix logits = joint_logits(model, x);
  std::vector<Label> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto r = logits.row(i);
    out[i] = static_cast<Label>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double accuracy(const JointModel& model, const DenseMatrix& x, std::span<const Label> labels) {
  if (labels.empty()) return 0.0;
  const auto pred = predict(model, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

JointGrads zero_grads(const JointModel& model) {
  return {EncoderParams::zeros_like(model.encoder),
          Linear::zeros(model.classifier.in_features(), model.classifier.out_features())};
}

JointGrads joint_backward(const JointModel& model, const JointForward& forward, const DenseMatrix& grad_logits,
                          const DenseMatrix& grad_features, const DenseMatrix& grad_projections) {
  const std::size_t n = forward.encoder.features.rows();
  JointGrads grads;
  grads.classifier = Linear::zeros(model.classifier.in_features(), model.classifier.out_features());
  DenseMatrix g_feat = grad_features.empty() ? DenseMatrix(n, model.encoder.feature_dim()) : grad_features;
  if (!grad_logits.empty()) {
    if (grad_logits.rows() != n || grad_logits.cols() != model.logit_dim()) {
      throw ShapeError("joint_backward: logit gradient shape mismatch");
    }
    grads.classifier.weight = matmul_at(grad_logits, forward.encoder.features);
    grads.classifier.bias = column_sums(grad_logits);
    add_scaled(g_feat, matmul(grad_logits, model.classifier.weight));
  }
  grads.encoder = encoder_backward(model.encoder, forward.encoder.cache, g_feat, grad_projections);
  return grads;
}

void accumulate(JointGrads& into, const JointGrads& from, double scale) {
  add_scaled(into.encoder, from.encoder, scale);
  add_scaled(into.classifier.weight, from.classifier.weight, scale);
  for (std::size_t j = 0; j < into.classifier.bias.size(); ++j) into.classifier.bias[j] += scale * from.classifier.bias[j];
}

std::vector<std::span<double>> parameter_spans(JointModel& model) {
  auto spans = parameter_spans(model.encoder, true);
  for (auto s : parameter_spans(model.classifier)) spans.push_back(s);
  return spans;
}

std::vector<std::span<const double>> parameter_spans(const JointGrads& grads, const JointModel& model) {
  std::vector<std::span<const double>> spans;
  for (std::size_t i = 0; i < grads.encoder.layer_count(); ++i) {
    if (model.encoder.is_frozen(i)) continue;
    for (auto s : parameter_spans(grads.encoder.layer(i))) spans.push_back(s);
  }
  for (auto s : parameter_spans(grads.classifier)) spans.push_back(s);
  return spans;
}

void apply_sgd(JointModel& model, const JointGrads& grads, SgdState& state) {
  const auto params = parameter_spans(model);
  const auto g = parameter_spans(grads, model);
  sgd_step(params, g, state);
  ++model.encoder.version;
}

void expand_classifier(JointModel& model, std::size_t num_new, std::uint64_t seed) {
  if (model.new_classes != 0) throw ContractError("expand_classifier: previous new-head block is not merged");
  if (num_new == 0) return;
  const Linear fresh = Linear::uniform_init(model.classifier.in_features(), num_new, seed);
  for (std::size_t r = 0; r < num_new; ++r) model.classifier.weight.append_row(fresh.weight.row(r));
  model.classifier.bias.insert(model.classifier.bias.end(), fresh.bias.begin(), fresh.bias.end());
  model.new_classes = num_new;
}

void merge_heads(JointModel& model) {
  model.old_classes += model.new_classes;
  model.new_classes = 0;
  model.frozen_encoder.reset();
}

void freeze_encoder_copy(JointModel& model) { model.frozen_encoder = model.encoder; }

}  // namespace cgid
