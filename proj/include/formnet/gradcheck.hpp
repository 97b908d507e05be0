#pragma once

#include <functional>

#include "formnet/tensor.hpp"

namespace formnet {

using TensorFn = std::function<Tensor(const Tensor&)>;

// Max over coordinates of |analytic - central difference| / (|analytic| + 1e-8).
// f must be a pure scalar-valued function of x's current values; x is restored
// on return. Meaningful accuracy needs 64-bit mode.
double finite_diff_check(const TensorFn& f, Tensor& x, double h);

// Same, probing only `max_coords` coordinates chosen by `rng` (for large
// tensors, e.g. whole-model checks).
double finite_diff_check_sampled(const TensorFn& f, Tensor& x, double h, i64 max_coords, Rng& rng);

}  // namespace formnet
