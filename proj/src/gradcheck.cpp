#include "formnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace formnet {

namespace {

double eval_scalar(const TensorFn& f, const Tensor& x) {
  NoGradGuard ng;
  Tensor y = f(x);
  if (y.size() != 1) fail(cat("finite_diff_check: f returned shape ", shape_str(y.shape())));
  return y.item();
}

}  // namespace

double finite_diff_check_sampled(const TensorFn& f, Tensor& x, double h, i64 max_coords,
                                 Rng& rng) {
  if (!x.requires_grad()) fail("finite_diff_check: x must require grad");
  x.ensure_grad();
  x.zero_grad();
  Tensor y = f(x);
  if (y.size() != 1) fail(cat("finite_diff_check: f returned shape ", shape_str(y.shape())));
  backward(y);
  std::vector<double> analytic = x.grad();
  x.zero_grad();

  std::vector<i64> coords(static_cast<size_t>(x.size()));
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords > 0 && max_coords < x.size()) {
    // partial Fisher-Yates for the first max_coords entries
    for (i64 i = 0; i < max_coords; ++i) {
      const i64 j = i + rng.next_below(static_cast<i64>(coords.size()) - i);
      std::swap(coords[static_cast<size_t>(i)], coords[static_cast<size_t>(j)]);
    }
    coords.resize(static_cast<size_t>(max_coords));
  }

  double max_err = 0.0;
  auto& vals = x.values();
  for (i64 c : coords) {
    const size_t i = static_cast<size_t>(c);
    const double orig = vals[i];
    vals[i] = fp64_mode() ? orig + h : round_storage_value(orig + h);
    const double fp = eval_scalar(f, x);
    vals[i] = fp64_mode() ? orig - h : round_storage_value(orig - h);
    const double fm = eval_scalar(f, x);
    vals[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

double finite_diff_check(const TensorFn& f, Tensor& x, double h) {
  Rng rng(0);
  return finite_diff_check_sampled(f, x, h, 0, rng);
}

}  // namespace formnet
