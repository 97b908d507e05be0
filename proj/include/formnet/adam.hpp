#pragma once

#include "formnet/param.hpp"

namespace formnet {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  i64 step = 0;
  // first/second moment buffers, aligned with the store's parameter order
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const ParameterStore& params);
};

// Standard Adam update with bias correction; zeroes grads afterwards.
// A parameter without a gradient buffer is an error naming the parameter.
void adam_step(AdamState& state, ParameterStore& params);

}  // namespace formnet
