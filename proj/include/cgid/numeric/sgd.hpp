#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cgid {

enum class LrSchedule { constant, warmup_cosine };

LrSchedule parse_lr_schedule(const std::string& name);
std::string to_string(LrSchedule s);

struct SgdConfig {
  double peak_lr = 0.01;
  double warmup_ratio = 0.1;
  std::size_t total_steps = 1;
  double weight_decay = 1.5e-4;
  double momentum = 0.9;
  LrSchedule schedule = LrSchedule::warmup_cosine;
};

// Linear warm-up from 0 to peak over the first warmup_ratio of total_steps, then cosine decay to 0.
// Steps past total_steps are clamped to the final value.
double lr_at(std::size_t step, const SgdConfig& config);

struct SgdState {
  SgdConfig config;
  std::vector<std::vector<double>> momentum;  // lazily shaped on the first step
  std::size_t step = 0;

  explicit SgdState(SgdConfig c = {}) : config(c) {}
};

// v <- momentum·v + (g + weight_decay·p);  p <- p - lr(step)·v;  step += 1.
void sgd_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
              SgdState& state);

}  // namespace cgid
