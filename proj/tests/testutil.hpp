#pragma once

#include <functional>
#include <string>
#include <vector>

#include "formnet/gradcheck.hpp"
#include "formnet/ops.hpp"

namespace formnet::testing {

inline Tensor random_tensor(std::vector<i64> shape, Rng& rng, double lo = -2.0, double hi = 2.0,
                            bool requires_grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = rng.next_uniform(lo, hi);
  round_storage(t.values());
  return t;
}

// Weighted sum against a fixed random tensor; better conditioned than a plain
// mean for catching backward bugs. Seeded so repeated calls are pure.
inline Tensor weighted_sum(const Tensor& y, u64 seed) {
  Rng rng(seed);
  Tensor w = random_tensor(y.shape(), rng, -1.0, 1.0);
  return sum_all(mul(y, w));
}

struct GradCase {
  std::string name;
  // builds a fresh random instance: the tensor to differentiate and the
  // scalar function of it
  std::function<void(Rng&, Tensor&, TensorFn&)> make;
  // step used in 32-bit mode; ops that are linear in the probed tensor take a
  // large step (no truncation error) to beat float32 quantization noise
  double h32 = 2e-2;
};

// One gradient-check case per differentiable op (some ops appear several
// times to cover each differentiable argument).
std::vector<GradCase> gradcheck_cases();

// Runs `instances` random instances of every case; returns the worst relative
// error across all of them and reports per-case worst via out_lines.
double run_gradcheck_sweep(i64 instances, double h, u64 seed,
                           std::vector<std::pair<std::string, double>>* per_case = nullptr);

}  // namespace formnet::testing
