#include "minnet/optim.hpp"

namespace minnet {

void OptimState::init(const std::vector<ParamRef>& params) {
  velocity.clear();
  velocity.reserve(params.size());
  for (const ParamRef& p : params) velocity.emplace_back(p.value->size(), 0.0);
  lr = base_lr;
}

void apply_schedule(OptimState& state, int epoch) {
  double rate = state.base_lr;
  for (const ScheduleMilestone& ms : state.schedule) {
    if (ms.epoch <= epoch) rate *= ms.multiplier;
  }
  state.lr = rate;
}

void sgd_step(const std::vector<ParamRef>& params, OptimState& state) {
  if (state.velocity.size() != params.size()) {
    throw InvalidState("sgd_step: velocity registry has " +
                       std::to_string(state.velocity.size()) + " entries for " +
                       std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& w = *params[i].value;
    const std::vector<double>& g = *params[i].grad;
    std::vector<double>& v = state.velocity[i];
    if (v.size() != w.size() || g.size() != w.size()) {
      throw InvalidState("sgd_step: shape mismatch at parameter '" + params[i].name + "'");
    }
    const double wd = params[i].decay ? state.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = state.momentum * v[j] - state.lr * (g[j] + wd * w[j]);
      w[j] += v[j];
    }
  }
}

}  // namespace minnet
