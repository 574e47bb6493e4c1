#pragma once

// Finite-difference checks of every training loss, differentiated all the way into the network
// parameters. Each check returns the worst per-block relative error.

#include <algorithm>
#include <functional>
#include <utility>

#include "cgid/baselines/baselines.hpp"
#include "cgid/plrd/losses.hpp"
#include "cgid/plrd/model.hpp"
#include "cgid/plrd/plrd_trainer.hpp"
#include "support.hpp"

namespace cgid::test {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-4;

struct GradFixture {
  JointModel model;
  DenseMatrix x;
};

// Two old classes, two new ones, dims at most 8, batch 6.
inline GradFixture grad_fixture(std::uint64_t seed) {
  GradFixture f;
  const EncoderConfig cfg{.input_dim = 5, .hidden = {7, 6}, .feature_dim = 4, .projection_dim = 3};
  f.model = JointModel::create(cfg, 2, seed);
  expand_classifier(f.model, 2, seed + 1);
  f.x = random_matrix(6, 5, seed + 2);
  return f;
}

using LossFn = std::function<std::pair<double, JointGrads>(const JointModel&)>;

inline double check_gradient(JointModel model, const LossFn& loss) {
  const JointGrads analytic = loss(model).second;
  const auto grads = parameter_spans(analytic, model);
  auto params = parameter_spans(model);
  double worst = 0.0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto numeric = numeric_gradient(params[b], [&] { return loss(model).first; }, kFdStep);
    worst = std::max(worst, relative_error(grads[b], numeric));
  }
  return worst;
}

inline std::vector<Label> random_labels(std::size_t n, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Label> out(n);
  for (Label& l : out) l = static_cast<Label>(uniform_index(rng, classes));
  return out;
}

inline DenseMatrix random_distribution(std::size_t n, std::size_t k, std::uint64_t seed) {
  DenseMatrix d = random_matrix(n, k, seed);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double& v : d.row(i)) s += (v = std::exp(v));
    for (double& v : d.row(i)) v /= s;
  }
  return d;
}

inline double ce_gradient_error(std::uint64_t seed) {
  const auto f = grad_fixture(seed);
  const bool soft = seed % 2 == 1;
  const auto labels = random_labels(6, 4, seed + 10);
  const auto targets = random_distribution(6, 4, seed + 11);
  Rng rng(seed + 12);
  std::vector<double> weights(6);
  for (double& w : weights) w = uniform(rng, 0.5, 3.0);
  const double temperature = soft ? 0.7 : 1.0;
  return check_gradient(f.model, [&](const JointModel& m) {
    const auto fwd = joint_forward(m, f.x, 0.0, 0);
    const auto r = soft ? cross_entropy(fwd.logits, targets, weights, temperature)
                        : cross_entropy(fwd.logits, labels, weights);
    return std::pair{r.value, joint_backward(m, fwd, r.grad, {}, {})};
  });
}

inline double pcl_gradient_error(std::uint64_t seed) {
  const auto f = grad_fixture(seed);
  const DenseMatrix prototypes = l2_normalize_rows(random_matrix(4, 3, seed + 20));
  DenseMatrix q = random_distribution(6, 4, seed + 21);
  // Replayed rows carry one-hot targets.
  for (std::size_t i = 3; i < 6; ++i) {
    for (double& v : q.row(i)) v = 0.0;
    q(i, i % 2) = 1.0;
  }
  return check_gradient(f.model, [&](const JointModel& m) {
    const auto fwd = joint_forward(m, f.x, 0.0, 0);
    const auto r = pcl_loss(fwd.encoder.projections, prototypes, q, 0.5);
    return std::pair{r.value, joint_backward(m, fwd, {}, {}, r.grad)};
  });
}

inline double ins_gradient_error(std::uint64_t seed) {
  const auto f = grad_fixture(seed);
  return check_gradient(f.model, [&](const JointModel& m) {
    const auto clean = joint_forward(m, f.x, 0.0, 0);
    const auto aug = joint_forward(m, f.x, 0.5, seed + 30);
    const auto r = instance_cl_loss(clean.encoder.projections, aug.encoder.projections, 0.5);
    JointGrads g = joint_backward(m, clean, {}, {}, r.grad_a);
    accumulate(g, joint_backward(m, aug, {}, {}, r.grad_b));
    return std::pair{r.value, std::move(g)};
  });
}

inline double fd_gradient_error(std::uint64_t seed) {
  const auto f = grad_fixture(seed);
  const std::vector<std::size_t> old_rows{1, 3, 5};
  const auto other = EncoderParams::init({.input_dim = 5, .hidden = {7, 6}, .feature_dim = 4, .projection_dim = 3},
                                         seed + 40);
  const DenseMatrix frozen = encoder_features(other, select_rows(f.x, old_rows));
  return check_gradient(f.model, [&](const JointModel& m) {
    const auto fwd = joint_forward(m, f.x, 0.0, 0);
    const auto r = feature_distill_loss(select_rows(fwd.encoder.features, old_rows), frozen);
    DenseMatrix g(6, 4);
    for (std::size_t k = 0; k < old_rows.size(); ++k)
      for (std::size_t d = 0; d < 4; ++d) g(old_rows[k], d) = r.grad(k, d);
    return std::pair{r.value, joint_backward(m, fwd, {}, g, {})};
  });
}

inline double e2e_gradient_error(std::uint64_t seed) {
  const auto f = grad_fixture(seed);
  // Targets are held fixed, as they are during training.
  const auto la0 = joint_forward(f.model, f.x, 0.5, seed + 50).logits;
  const auto lb0 = joint_forward(f.model, f.x, 0.5, seed + 51).logits;
  const auto qa = e2e_targets(la0, 2, 2, 0.05, 3);
  const auto qb = e2e_targets(lb0, 2, 2, 0.05, 3);
  return check_gradient(f.model, [&](const JointModel& m) {
    const auto a = joint_forward(m, f.x, 0.5, seed + 50);
    const auto b = joint_forward(m, f.x, 0.5, seed + 51);
    const auto r = swapped_prediction_loss(a.logits, b.logits, qa, qb, 0.1);
    JointGrads g = joint_backward(m, a, r.grad_a, {}, {});
    accumulate(g, joint_backward(m, b, r.grad_b, {}, {}));
    return std::pair{r.value, std::move(g)};
  });
}

// The full PLRD objective on a mixed batch with random loss weights.
inline double total_gradient_error(std::uint64_t seed) {
  auto f = grad_fixture(seed);
  freeze_encoder_copy(f.model);
  MixedBatch batch;
  batch.inputs = f.x;
  batch.origin = {Origin::new_sample, Origin::new_sample, Origin::new_sample,
                  Origin::old_sample, Origin::old_sample, Origin::old_sample};
  batch.old_labels = {-1, -1, -1, 0, 1, 1};
  batch.source = {0, 1, 2, 0, 1, 2};
  PrototypeBank bank(3, 0.7);
  bank.append_random(4, seed + 60);
  Rng rng(seed + 61);
  PlrdConfig config;
  config.dropout = 0.5;
  config.weights = {uniform(rng, 0.2, 2.0), uniform(rng, 0.2, 2.0), uniform(rng, 0.2, 2.0), uniform(rng, 0.2, 2.0)};
  // Perturb the live encoder so the distillation term is non-zero.
  add_scaled(f.model.encoder, EncoderParams::init({.input_dim = 5, .hidden = {7, 6}, .feature_dim = 4,
                                                   .projection_dim = 3}, seed + 62), 0.3);
  const PlrdTargets targets = plrd_targets(f.model, bank, batch, config);
  return check_gradient(f.model, [&](const JointModel& m) {
    auto r = plrd_loss(m, bank, batch, targets, config, seed + 63);
    return std::pair{r.breakdown.total, std::move(r.grads)};
  });
}

}  // namespace cgid::test
