#include "cgid/numeric/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cgid/errors.hpp"

namespace cgid {

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::constant;
  if (name == "warmup_cosine") return LrSchedule::warmup_cosine;
  throw ConfigError("unknown learning-rate schedule '" + name + "'");
}

std::string to_string(LrSchedule s) { return s == LrSchedule::constant ? "constant" : "warmup_cosine"; }

double lr_at(std::size_t step, const SgdConfig& config) {
  if (config.schedule == LrSchedule::constant) return config.peak_lr;
  const double total = static_cast<double>(std::max<std::size_t>(config.total_steps, 1));
  const double s = std::min(static_cast<double>(step), total);
  const double warmup = config.warmup_ratio * total;
  if (s < warmup) return config.peak_lr * s / warmup;
  const double span = total - warmup;
  if (span <= 0.0) return config.peak_lr;
  const double progress = (s - warmup) / span;
  return std::max(0.0, config.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

void sgd_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
              SgdState& state) {
  if (params.size() != grads.size()) throw ShapeError("sgd_step: parameter/gradient count mismatch");
  if (state.momentum.empty()) {
    state.momentum.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) state.momentum[i].assign(params[i].size(), 0.0);
  }
  if (state.momentum.size() != params.size()) throw ShapeError("sgd_step: momentum buffers do not match parameters");
  const double lr = lr_at(state.step, state.config);
  const double mu = state.config.momentum;
  const double wd = state.config.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    auto& v = state.momentum[i];
    if (p.size() != g.size() || v.size() != p.size()) throw ShapeError("sgd_step: parameter block shape mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = mu * v[j] + g[j] + wd * p[j];
      p[j] -= lr * v[j];
    }
  }
  ++state.step;
}

}  // namespace cgid
