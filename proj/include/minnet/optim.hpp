#pragma once

#include <vector>

#include "minnet/layers.hpp"

namespace minnet {

struct ScheduleMilestone {
  int epoch = 0;
  double multiplier = 1.0;
};

/// SGD with classical momentum, L2 weight decay and a step learning-rate
/// schedule. Velocities are keyed by registry position and zero-initialized.
struct OptimState {
  double base_lr = 0.1;
  double lr = 0.1;  // scheduled rate, set by apply_schedule
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::vector<ScheduleMilestone> schedule;
  std::vector<std::vector<double>> velocity;

  void init(const std::vector<ParamRef>& params);
};

/// lr = base_lr times the product of multipliers whose epoch <= current.
void apply_schedule(OptimState& state, int epoch);

/// v <- momentum*v - lr*(g + weight_decay*w); w <- w + v.
/// Weight decay is skipped for registry entries flagged decay=false.
void sgd_step(const std::vector<ParamRef>& params, OptimState& state);

}  // namespace minnet
