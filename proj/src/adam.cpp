#include "formnet/adam.hpp"

#include <cmath>

namespace formnet {

void AdamState::init(const ParameterStore& params) {
  step = 0;
  m.assign(params.size(), {});
  v.assign(params.size(), {});
  for (size_t i = 0; i < params.size(); ++i) {
    m[i].assign(static_cast<size_t>(params[i].tensor.size()), 0.0);
    v[i].assign(static_cast<size_t>(params[i].tensor.size()), 0.0);
  }
}

void adam_step(AdamState& state, ParameterStore& params) {
  if (state.m.size() != params.size()) fail("adam_step: state not initialized for this store");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    auto& grad = p.tensor.grad();
    if (grad.size() != p.tensor.values().size())
      fail(cat("adam_step: parameter '", p.name, "' has no gradient"));
    auto& mi = state.m[i];
    auto& vi = state.v[i];
    auto& val = p.tensor.values();
    for (size_t j = 0; j < val.size(); ++j) {
      const double g = grad[j];
      mi[j] = state.beta1 * mi[j] + (1.0 - state.beta1) * g;
      vi[j] = state.beta2 * vi[j] + (1.0 - state.beta2) * g * g;
      const double mhat = mi[j] / bc1;
      const double vhat = vi[j] / bc2;
      val[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    round_storage(val);
    p.tensor.zero_grad();
  }
}

}  // namespace formnet
