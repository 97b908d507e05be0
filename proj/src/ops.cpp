#include "formnet/ops.hpp"

#include <algorithm>
#include <cmath>

#include "formnet/kernels.hpp"

namespace formnet {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// Returns the broadcast repeat count of b over a (1 when shapes are equal).
i64 broadcast_reps(const char* op, const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < sb.size())
    fail(cat(op, ": shape mismatch between ", shape_str(sa), " and ", shape_str(sb)));
  const size_t off = sa.size() - sb.size();
  for (size_t i = 0; i < sb.size(); ++i)
    if (sa[off + i] != sb[i])
      fail(cat(op, ": shape mismatch between ", shape_str(sa), " and ", shape_str(sb)));
  return a.size() / std::max<i64>(b.size(), 1);
}

template <typename Fwd, typename Bwd>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  const i64 reps = broadcast_reps(op, a, b);
  const i64 nb = b.size();
  Tensor out = make_output(op, a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (i64 r = 0; r < reps; ++r)
    for (i64 i = 0; i < nb; ++i) po[r * nb + i] = fwd(pa[r * nb + i], pb[i]);
  finish_forward(out);
  attach(out, op, {a, b}, [reps, nb, bwd](TensorNode& o) {
    TensorNode& pa = *o.parents[0];
    TensorNode& pb = *o.parents[1];
    for (i64 r = 0; r < reps; ++r)
      for (i64 i = 0; i < nb; ++i) {
        const i64 ia = r * nb + i;
        double ga, gb;
        bwd(pa.value[ia], pb.value[i], o.grad[ia], ga, gb);
        if (pa.requires_grad) pa.grad[ia] += ga;
        if (pb.requires_grad) pb.grad[i] += gb;
      }
  });
  return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_op(const char* op, const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out = make_output(op, x.shape());
  const i64 n = x.size();
  const double* px = x.data();
  double* po = out.data();
  for (i64 i = 0; i < n; ++i) po[i] = fwd(px[i]);
  finish_forward(out);
  attach(out, op, {x}, [bwd](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    const i64 n2 = o.numel();
    for (i64 i = 0; i < n2; ++i) p.grad[i] += bwd(p.value[i], o.value[i]) * o.grad[i];
  });
  return out;
}

// Treat an ND tensor as (rows, inner) over the first axis.
void rows_inner(const Tensor& x, i64& rows, i64& inner) {
  rows = x.ndim() == 0 ? 1 : x.dim(0);
  inner = rows == 0 ? 0 : x.size() / rows;
}

// Treat an ND tensor as (outer, cols) over the last axis.
void outer_cols(const Tensor& x, i64& outer, i64& cols) {
  cols = x.ndim() == 0 ? 1 : x.dim(x.ndim() - 1);
  outer = cols == 0 ? 0 : x.size() / cols;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& ga, double& gb) {
        ga = g;
        gb = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& ga, double& gb) {
        ga = g;
        gb = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& ga, double& gb) {
        ga = g * y;
        gb = g * x;
      });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      "softplus", x,
      [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary_op(
      "clamp", x, [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail("concat_cols: empty input list");
  i64 outer0, cols_total = 0;
  {
    i64 c;
    outer_cols(xs[0], outer0, c);
  }
  std::vector<i64> widths;
  for (const Tensor& x : xs) {
    i64 outer, c;
    outer_cols(x, outer, c);
    if (outer != outer0)
      fail(cat("concat_cols: shape mismatch between ", shape_str(xs[0].shape()), " and ",
               shape_str(x.shape())));
    widths.push_back(c);
    cols_total += c;
  }
  std::vector<i64> shape = xs[0].shape();
  shape.back() = cols_total;
  Tensor out = make_output("concat_cols", shape);
  double* po = out.data();
  i64 off = 0;
  for (size_t t = 0; t < xs.size(); ++t) {
    const double* px = xs[t].data();
    for (i64 r = 0; r < outer0; ++r)
      std::copy(px + r * widths[t], px + (r + 1) * widths[t], po + r * cols_total + off);
    off += widths[t];
  }
  finish_forward(out);
  attach(out, "concat_cols", xs, [widths, cols_total, outer0](TensorNode& o) {
    i64 off2 = 0;
    for (size_t t = 0; t < o.parents.size(); ++t) {
      TensorNode& p = *o.parents[t];
      if (p.requires_grad)
        for (i64 r = 0; r < outer0; ++r)
          for (i64 c = 0; c < widths[t]; ++c)
            p.grad[r * widths[t] + c] += o.grad[r * cols_total + off2 + c];
      off2 += widths[t];
    }
  });
  return out;
}

Tensor slice_cols(const Tensor& x, i64 start, i64 len) {
  i64 outer, cols;
  outer_cols(x, outer, cols);
  if (start < 0 || len <= 0 || start + len > cols)
    fail(cat("slice_cols: slice [", start, ", ", start + len, ") out of range for ",
             shape_str(x.shape())));
  std::vector<i64> shape = x.shape();
  shape.back() = len;
  Tensor out = make_output("slice_cols", shape);
  const double* px = x.data();
  double* po = out.data();
  for (i64 r = 0; r < outer; ++r)
    std::copy(px + r * cols + start, px + r * cols + start + len, po + r * len);
  finish_forward(out);
  attach(out, "slice_cols", {x}, [outer, cols, start, len](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    for (i64 r = 0; r < outer; ++r)
      for (i64 c = 0; c < len; ++c) p.grad[r * cols + start + c] += o.grad[r * len + c];
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) fail("concat_rows: empty input list");
  i64 rows_total = 0;
  i64 inner0;
  {
    i64 r;
    rows_inner(xs[0], r, inner0);
  }
  std::vector<i64> row_counts;
  for (const Tensor& x : xs) {
    i64 r, inner;
    rows_inner(x, r, inner);
    if (inner != inner0)
      fail(cat("concat_rows: shape mismatch between ", shape_str(xs[0].shape()), " and ",
               shape_str(x.shape())));
    row_counts.push_back(r);
    rows_total += r;
  }
  std::vector<i64> shape = xs[0].shape();
  shape[0] = rows_total;
  Tensor out = make_output("concat_rows", shape);
  double* po = out.data();
  i64 off = 0;
  for (const Tensor& x : xs) {
    std::copy(x.data(), x.data() + x.size(), po + off);
    off += x.size();
  }
  finish_forward(out);
  attach(out, "concat_rows", xs, [row_counts, inner0](TensorNode& o) {
    i64 off2 = 0;
    for (size_t t = 0; t < o.parents.size(); ++t) {
      TensorNode& p = *o.parents[t];
      const i64 n = row_counts[t] * inner0;
      if (p.requires_grad)
        for (i64 i = 0; i < n; ++i) p.grad[i] += o.grad[off2 + i];
      off2 += n;
    }
  });
  return out;
}

Tensor slice_rows(const Tensor& x, i64 start, i64 len) {
  i64 rows, inner;
  rows_inner(x, rows, inner);
  if (start < 0 || len <= 0 || start + len > rows)
    fail(cat("slice_rows: slice [", start, ", ", start + len, ") out of range for ",
             shape_str(x.shape())));
  std::vector<i64> shape = x.shape();
  shape[0] = len;
  Tensor out = make_output("slice_rows", shape);
  std::copy(x.data() + start * inner, x.data() + (start + len) * inner, out.data());
  finish_forward(out);
  attach(out, "slice_rows", {x}, [start, len, inner](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    for (i64 i = 0; i < len * inner; ++i) p.grad[start * inner + i] += o.grad[i];
  });
  return out;
}

Tensor gather_rows(const Tensor& x, std::vector<i64> idx) {
  i64 rows, inner;
  rows_inner(x, rows, inner);
  for (i64 i : idx)
    if (i < 0 || i >= rows)
      fail(cat("gather_rows: index ", i, " out of range for ", shape_str(x.shape())));
  std::vector<i64> shape = x.shape();
  shape[0] = static_cast<i64>(idx.size());
  Tensor out = make_output("gather_rows", shape);
  double* po = out.data();
  for (size_t r = 0; r < idx.size(); ++r)
    std::copy(x.data() + idx[r] * inner, x.data() + (idx[r] + 1) * inner, po + r * inner);
  finish_forward(out);
  attach(out, "gather_rows", {x}, [idx = std::move(idx), inner](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    for (size_t r = 0; r < idx.size(); ++r)
      for (i64 c = 0; c < inner; ++c)
        p.grad[idx[r] * inner + c] += o.grad[static_cast<i64>(r) * inner + c];
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.ndim() != 2) fail(cat("transpose: expected rank-2 tensor, got ", shape_str(x.shape())));
  const i64 n = x.dim(0), m = x.dim(1);
  Tensor out = make_output("transpose", {m, n});
  const double* px = x.data();
  double* po = out.data();
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < m; ++j) po[j * n + i] = px[i * m + j];
  finish_forward(out);
  attach(out, "transpose", {x}, [n, m](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    for (i64 i = 0; i < n; ++i)
      for (i64 j = 0; j < m; ++j) p.grad[i * m + j] += o.grad[j * n + i];
  });
  return out;
}

Tensor reshape(const Tensor& x, std::vector<i64> new_shape) {
  if (shape_numel(new_shape) != x.size())
    fail(cat("reshape: cannot view ", shape_str(x.shape()), " as ", shape_str(new_shape)));
  Tensor out = make_output("reshape", std::move(new_shape));
  std::copy(x.data(), x.data() + x.size(), out.data());
  finish_forward(out);
  attach(out, "reshape", {x}, [](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    for (i64 i = 0; i < o.numel(); ++i) p.grad[i] += o.grad[i];
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    fail(cat("matmul: shapes ", shape_str(a.shape()), " and ", shape_str(b.shape()),
             " are not conformable"));
  const i64 n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out = make_output("matmul", {n, m});
  kernels::matmul(a.data(), b.data(), out.data(), n, k, m);
  finish_forward(out);
  attach(out, "matmul", {a, b}, [n, k, m](TensorNode& o) {
    TensorNode& pa = *o.parents[0];
    TensorNode& pb = *o.parents[1];
    if (pa.requires_grad) {
      // dA += dY B^T
      for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < m; ++j) {
          const double g = o.grad[i * m + j];
          if (g == 0.0) continue;
          const double* brow = pb.value.data() + 0 * m + j;
          for (i64 kk = 0; kk < k; ++kk) pa.grad[i * k + kk] += g * pb.value[kk * m + j];
          (void)brow;
        }
    }
    if (pb.requires_grad) {
      // dB += A^T dY
      for (i64 kk = 0; kk < k; ++kk)
        for (i64 i = 0; i < n; ++i) {
          const double av = pa.value[i * k + kk];
          if (av == 0.0) continue;
          for (i64 j = 0; j < m; ++j) pb.grad[kk * m + j] += av * o.grad[i * m + j];
        }
    }
  });
  return out;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.ndim() != 2)
    fail(cat("affine: weight must be rank-2, got ", shape_str(w.shape())));
  i64 outer, in;
  outer_cols(x, outer, in);
  const i64 w_in = w.dim(0), out_dim = w.dim(1);
  if (in != w_in || b.size() != out_dim)
    fail(cat("affine: shapes ", shape_str(x.shape()), ", ", shape_str(w.shape()), ", ",
             shape_str(b.shape()), " are not conformable"));
  std::vector<i64> shape = x.shape();
  shape.back() = out_dim;
  Tensor out = make_output("affine", shape);
  kernels::matmul(x.data(), w.data(), out.data(), outer, in, out_dim);
  double* po = out.data();
  const double* pb = b.data();
  for (i64 r = 0; r < outer; ++r)
    for (i64 j = 0; j < out_dim; ++j) po[r * out_dim + j] += pb[j];
  finish_forward(out);
  attach(out, "affine", {x, w, b}, [outer, in, out_dim](TensorNode& o) {
    TensorNode& px = *o.parents[0];
    TensorNode& pw = *o.parents[1];
    TensorNode& pbias = *o.parents[2];
    if (px.requires_grad)
      for (i64 r = 0; r < outer; ++r)
        for (i64 j = 0; j < out_dim; ++j) {
          const double g = o.grad[r * out_dim + j];
          if (g == 0.0) continue;
          for (i64 kk = 0; kk < in; ++kk) px.grad[r * in + kk] += g * pw.value[kk * out_dim + j];
        }
    if (pw.requires_grad)
      for (i64 r = 0; r < outer; ++r)
        for (i64 kk = 0; kk < in; ++kk) {
          const double xv = px.value[r * in + kk];
          if (xv == 0.0) continue;
          for (i64 j = 0; j < out_dim; ++j) pw.grad[kk * out_dim + j] += xv * o.grad[r * out_dim + j];
        }
    if (pbias.requires_grad)
      for (i64 r = 0; r < outer; ++r)
        for (i64 j = 0; j < out_dim; ++j) pbias.grad[j] += o.grad[r * out_dim + j];
  });
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = make_output("sum_all", {1});
  double acc = 0.0;
  for (i64 i = 0; i < x.size(); ++i) acc += x.data()[i];
  out.data()[0] = acc;
  finish_forward(out);
  attach(out, "sum_all", {x}, [](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    const double g = o.grad[0];
    for (double& gv : p.grad) gv += g;
  });
  return out;
}

Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(std::max<i64>(x.size(), 1));
  Tensor out = make_output("mean_all", {1});
  double acc = 0.0;
  for (i64 i = 0; i < x.size(); ++i) acc += x.data()[i];
  out.data()[0] = acc * inv;
  finish_forward(out);
  attach(out, "mean_all", {x}, [inv](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    const double g = o.grad[0] * inv;
    for (double& gv : p.grad) gv += g;
  });
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  const int nd = x.ndim();
  if (axis < 0) axis += nd;
  if (axis < 0 || axis >= nd)
    fail(cat("softmax: axis ", axis, " out of range for ", shape_str(x.shape())));
  i64 axis_len = x.dim(axis);
  i64 inner = 1;
  for (int i = axis + 1; i < nd; ++i) inner *= x.dim(i);
  i64 outer = x.size() / (axis_len * inner);
  Tensor out = make_output("softmax", x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (i64 o = 0; o < outer; ++o)
    for (i64 in = 0; in < inner; ++in) {
      const i64 base = o * axis_len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (i64 a = 0; a < axis_len; ++a) mx = std::max(mx, px[base + a * inner]);
      double sum = 0.0;
      for (i64 a = 0; a < axis_len; ++a) {
        const double e = std::exp(px[base + a * inner] - mx);
        po[base + a * inner] = e;
        sum += e;
      }
      for (i64 a = 0; a < axis_len; ++a) po[base + a * inner] /= sum;
    }
  finish_forward(out);
  attach(out, "softmax", {x}, [outer, axis_len, inner](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    for (i64 ou = 0; ou < outer; ++ou)
      for (i64 in = 0; in < inner; ++in) {
        const i64 base = ou * axis_len * inner + in;
        double dot = 0.0;
        for (i64 a = 0; a < axis_len; ++a)
          dot += o.grad[base + a * inner] * o.value[base + a * inner];
        for (i64 a = 0; a < axis_len; ++a) {
          const i64 i = base + a * inner;
          p.grad[i] += o.value[i] * (o.grad[i] - dot);
        }
      }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  constexpr double eps = 1e-5;
  i64 outer, cols;
  outer_cols(x, outer, cols);
  if (gain.size() != cols || bias.size() != cols)
    fail(cat("layer_norm: gain/bias ", shape_str(gain.shape()), "/", shape_str(bias.shape()),
             " do not match last axis of ", shape_str(x.shape())));
  Tensor out = make_output("layer_norm", x.shape());
  const double* px = x.data();
  const double* pg = gain.data();
  const double* pb = bias.data();
  double* po = out.data();
  std::vector<double> inv_sigma(outer), mean(outer);
  for (i64 r = 0; r < outer; ++r) {
    double mu = 0.0;
    for (i64 c = 0; c < cols; ++c) mu += px[r * cols + c];
    mu /= cols;
    double var = 0.0;
    for (i64 c = 0; c < cols; ++c) {
      const double d = px[r * cols + c] - mu;
      var += d * d;
    }
    var /= cols;
    const double is = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    inv_sigma[r] = is;
    for (i64 c = 0; c < cols; ++c)
      po[r * cols + c] = (px[r * cols + c] - mu) * is * pg[c] + pb[c];
  }
  finish_forward(out);
  attach(out, "layer_norm", {x, gain, bias},
         [outer, cols, mean = std::move(mean), inv_sigma = std::move(inv_sigma)](TensorNode& o) {
           TensorNode& px = *o.parents[0];
           TensorNode& pg = *o.parents[1];
           TensorNode& pb = *o.parents[2];
           for (i64 r = 0; r < outer; ++r) {
             const double is = inv_sigma[r];
             const double mu = mean[r];
             double mean_d1 = 0.0, mean_d1x = 0.0;
             for (i64 c = 0; c < cols; ++c) {
               const i64 i = r * cols + c;
               const double xh = (px.value[i] - mu) * is;
               const double d1 = o.grad[i] * pg.value[c];
               mean_d1 += d1;
               mean_d1x += d1 * xh;
               if (pg.requires_grad) pg.grad[c] += o.grad[i] * xh;
               if (pb.requires_grad) pb.grad[c] += o.grad[i];
             }
             mean_d1 /= cols;
             mean_d1x /= cols;
             if (px.requires_grad)
               for (i64 c = 0; c < cols; ++c) {
                 const i64 i = r * cols + c;
                 const double xh = (px.value[i] - mu) * is;
                 const double d1 = o.grad[i] * pg.value[c];
                 px.grad[i] += (d1 - mean_d1 - xh * mean_d1x) * is;
               }
           }
         });
  return out;
}

Tensor masked_softmax_rows(const Tensor& scores, const std::vector<std::uint8_t>& mask) {
  if (scores.ndim() != 2)
    fail(cat("masked_softmax_rows: expected rank-2 scores, got ", shape_str(scores.shape())));
  const i64 n = scores.dim(0), m = scores.dim(1);
  if (static_cast<i64>(mask.size()) != n * m)
    fail(cat("masked_softmax_rows: mask size ", mask.size(), " does not match ",
             shape_str(scores.shape())));
  Tensor out = make_output("masked_softmax_rows", scores.shape());
  const double* ps = scores.data();
  double* po = out.data();
  for (i64 r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (i64 c = 0; c < m; ++c)
      if (mask[r * m + c]) mx = std::max(mx, ps[r * m + c]);
    if (!std::isfinite(mx)) fail(cat("masked_softmax_rows: row ", r, " has no allowed key"));
    double sum = 0.0;
    for (i64 c = 0; c < m; ++c) {
      const i64 i = r * m + c;
      if (mask[i]) {
        po[i] = std::exp(ps[i] - mx);
        sum += po[i];
      } else {
        po[i] = 0.0;
      }
    }
    for (i64 c = 0; c < m; ++c) po[r * m + c] /= sum;
  }
  finish_forward(out);
  attach(out, "masked_softmax_rows", {scores}, [n, m](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    for (i64 r = 0; r < n; ++r) {
      double dot = 0.0;
      for (i64 c = 0; c < m; ++c) dot += o.grad[r * m + c] * o.value[r * m + c];
      for (i64 c = 0; c < m; ++c) {
        const i64 i = r * m + c;
        p.grad[i] += o.value[i] * (o.grad[i] - dot);
      }
    }
  });
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, i64 stride_h, i64 stride_w) {
  if (x.ndim() != 4 || k.ndim() != 4)
    fail(cat("conv2d: expected rank-4 input and kernel, got ", shape_str(x.shape()), " and ",
             shape_str(k.shape())));
  if (x.dim(1) != k.dim(1))
    fail(cat("conv2d: shapes ", shape_str(x.shape()), " and ", shape_str(k.shape()),
             " disagree on input channels"));
  if (bias.size() != k.dim(0))
    fail(cat("conv2d: bias ", shape_str(bias.shape()), " does not match ", k.dim(0),
             " output channels"));
  kernels::Conv2dDims d =
      kernels::conv2d_dims(x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3),
                           stride_h, stride_w);
  Tensor out = make_output("conv2d", {d.n, d.cout, d.ho, d.wo});
  kernels::conv2d_forward(x.data(), k.data(), bias.data(), out.data(), d);
  finish_forward(out);
  attach(out, "conv2d", {x, k, bias}, [d](TensorNode& o) {
    TensorNode& px = *o.parents[0];
    TensorNode& pk = *o.parents[1];
    TensorNode& pb = *o.parents[2];
    if (px.requires_grad)
      kernels::conv2d_backward_input(o.grad.data(), pk.value.data(), px.grad.data(), d);
    if (pk.requires_grad || pb.requires_grad) {
      // gbias accumulation rides along with the kernel gradient
      std::vector<double> gk_tmp, gb_tmp(static_cast<size_t>(d.cout), 0.0);
      double* gk_ptr;
      if (pk.requires_grad) {
        gk_ptr = pk.grad.data();
      } else {
        gk_tmp.assign(pk.value.size(), 0.0);
        gk_ptr = gk_tmp.data();
      }
      kernels::conv2d_backward_kernel(px.value.data(), o.grad.data(), gk_ptr, gb_tmp.data(), d);
      if (pb.requires_grad)
        for (i64 c = 0; c < d.cout; ++c) pb.grad[c] += gb_tmp[c];
    }
  });
  return out;
}

Tensor scatter_mean(const Tensor& msgs, std::vector<i64> dst, i64 num_nodes) {
  i64 rows, inner;
  rows_inner(msgs, rows, inner);
  if (static_cast<i64>(dst.size()) != rows)
    fail(cat("scatter_mean: ", dst.size(), " destinations for ", rows, " messages"));
  std::vector<i64> count(static_cast<size_t>(num_nodes), 0);
  for (i64 d : dst) {
    if (d < 0 || d >= num_nodes) fail(cat("scatter_mean: destination ", d, " out of range"));
    ++count[static_cast<size_t>(d)];
  }
  Tensor out = make_output("scatter_mean", {num_nodes, inner});
  double* po = out.data();
  const double* pm = msgs.data();
  for (i64 e = 0; e < rows; ++e)
    for (i64 c = 0; c < inner; ++c) po[dst[e] * inner + c] += pm[e * inner + c];
  for (i64 i = 0; i < num_nodes; ++i)
    if (count[i] > 1)
      for (i64 c = 0; c < inner; ++c) po[i * inner + c] /= static_cast<double>(count[i]);
  finish_forward(out);
  attach(out, "scatter_mean", {msgs},
         [dst = std::move(dst), count = std::move(count), inner](TensorNode& o) {
           TensorNode& p = *o.parents[0];
           for (size_t e = 0; e < dst.size(); ++e) {
             const double inv = 1.0 / static_cast<double>(count[static_cast<size_t>(dst[e])]);
             for (i64 c = 0; c < inner; ++c)
               p.grad[static_cast<i64>(e) * inner + c] += o.grad[dst[e] * inner + c] * inv;
           }
         });
  return out;
}

Tensor broadcast_sum(const Tensor& u, const Tensor& v, const Tensor& b) {
  if (u.ndim() != 2 || u.dim(1) != 1 || v.ndim() != 2 || v.dim(1) != 1 || b.size() != 1)
    fail(cat("broadcast_sum: expected (n,1), (m,1), (1), got ", shape_str(u.shape()), ", ",
             shape_str(v.shape()), ", ", shape_str(b.shape())));
  const i64 n = u.dim(0), m = v.dim(0);
  Tensor out = make_output("broadcast_sum", {n, m});
  const double bv = b.data()[0];
  double* po = out.data();
  for (i64 i = 0; i < n; ++i)
    for (i64 j = 0; j < m; ++j) po[i * m + j] = u.data()[i] + v.data()[j] + bv;
  finish_forward(out);
  attach(out, "broadcast_sum", {u, v, b}, [n, m](TensorNode& o) {
    TensorNode& pu = *o.parents[0];
    TensorNode& pv = *o.parents[1];
    TensorNode& pb = *o.parents[2];
    for (i64 i = 0; i < n; ++i)
      for (i64 j = 0; j < m; ++j) {
        const double g = o.grad[i * m + j];
        if (pu.requires_grad) pu.grad[i] += g;
        if (pv.requires_grad) pv.grad[j] += g;
        if (pb.requires_grad) pb.grad[0] += g;
      }
  });
  return out;
}

Tensor mul_scalar_tensor(const Tensor& x, const Tensor& s) {
  if (s.size() != 1)
    fail(cat("mul_scalar_tensor: scalar operand has shape ", shape_str(s.shape())));
  Tensor out = make_output("mul_scalar_tensor", x.shape());
  const double sv = s.data()[0];
  for (i64 i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * sv;
  finish_forward(out);
  attach(out, "mul_scalar_tensor", {x, s}, [](TensorNode& o) {
    TensorNode& px = *o.parents[0];
    TensorNode& ps = *o.parents[1];
    const double sv = ps.value[0];
    for (i64 i = 0; i < o.numel(); ++i) {
      if (px.requires_grad) px.grad[i] += o.grad[i] * sv;
      if (ps.requires_grad) ps.grad[0] += o.grad[i] * px.value[i];
    }
  });
  return out;
}

Tensor row_l2_normalize(const Tensor& x) {
  constexpr double eps = 1e-12;
  i64 rows, inner;
  rows_inner(x, rows, inner);
  Tensor out = make_output("row_l2_normalize", x.shape());
  std::vector<double> inv_norm(rows);
  for (i64 r = 0; r < rows; ++r) {
    double s = 0.0;
    for (i64 c = 0; c < inner; ++c) {
      const double v = x.data()[r * inner + c];
      s += v * v;
    }
    inv_norm[r] = 1.0 / std::sqrt(s + eps);
    for (i64 c = 0; c < inner; ++c) out.data()[r * inner + c] = x.data()[r * inner + c] * inv_norm[r];
  }
  finish_forward(out);
  attach(out, "row_l2_normalize", {x},
         [rows, inner, inv_norm = std::move(inv_norm)](TensorNode& o) {
           TensorNode& p = *o.parents[0];
           for (i64 r = 0; r < rows; ++r) {
             double dot = 0.0;
             for (i64 c = 0; c < inner; ++c) dot += o.grad[r * inner + c] * o.value[r * inner + c];
             for (i64 c = 0; c < inner; ++c) {
               const i64 i = r * inner + c;
               p.grad[i] += (o.grad[i] - o.value[i] * dot) * inv_norm[r];
             }
           }
         });
  return out;
}

Tensor cross_entropy_rows(const Tensor& logits, std::vector<i64> targets) {
  if (logits.ndim() != 2)
    fail(cat("cross_entropy_rows: expected rank-2 logits, got ", shape_str(logits.shape())));
  const i64 n = logits.dim(0), v = logits.dim(1);
  if (static_cast<i64>(targets.size()) != n)
    fail(cat("cross_entropy_rows: ", targets.size(), " targets for ", n, " rows"));
  for (i64 t : targets)
    if (t < 0 || t >= v) fail(cat("cross_entropy_rows: target ", t, " out of range"));
  Tensor out = make_output("cross_entropy_rows", {1});
  const double* pl = logits.data();
  double acc = 0.0;
  for (i64 r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (i64 c = 0; c < v; ++c) mx = std::max(mx, pl[r * v + c]);
    double sum = 0.0;
    for (i64 c = 0; c < v; ++c) sum += std::exp(pl[r * v + c] - mx);
    acc += mx + std::log(sum) - pl[r * v + targets[static_cast<size_t>(r)]];
  }
  out.data()[0] = acc / static_cast<double>(n);
  finish_forward(out);
  attach(out, "cross_entropy_rows", {logits}, [n, v, targets = std::move(targets)](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    const double g = o.grad[0] / static_cast<double>(n);
    for (i64 r = 0; r < n; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (i64 c = 0; c < v; ++c) mx = std::max(mx, p.value[r * v + c]);
      double sum = 0.0;
      for (i64 c = 0; c < v; ++c) sum += std::exp(p.value[r * v + c] - mx);
      for (i64 c = 0; c < v; ++c) {
        double prob = std::exp(p.value[r * v + c] - mx) / sum;
        if (c == targets[static_cast<size_t>(r)]) prob -= 1.0;
        p.grad[r * v + c] += g * prob;
      }
    }
  });
  return out;
}

Tensor infonce_rows(const Tensor& sims, std::vector<i64> positives) {
  if (sims.ndim() != 2 || sims.dim(0) != sims.dim(1))
    fail(cat("infonce_rows: expected a square matrix, got ", shape_str(sims.shape())));
  const i64 n = sims.dim(0);
  if (static_cast<i64>(positives.size()) != n)
    fail(cat("infonce_rows: ", positives.size(), " positives for ", n, " rows"));
  for (i64 r = 0; r < n; ++r)
    if (positives[static_cast<size_t>(r)] < 0 || positives[static_cast<size_t>(r)] >= n ||
        positives[static_cast<size_t>(r)] == r)
      fail(cat("infonce_rows: invalid positive index for row ", r));
  Tensor out = make_output("infonce_rows", {1});
  const double* ps = sims.data();
  double acc = 0.0;
  for (i64 r = 0; r < n; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (i64 c = 0; c < n; ++c)
      if (c != r) mx = std::max(mx, ps[r * n + c]);
    double sum = 0.0;
    for (i64 c = 0; c < n; ++c)
      if (c != r) sum += std::exp(ps[r * n + c] - mx);
    acc += mx + std::log(sum) - ps[r * n + positives[static_cast<size_t>(r)]];
  }
  out.data()[0] = acc / static_cast<double>(n);
  finish_forward(out);
  attach(out, "infonce_rows", {sims}, [n, positives = std::move(positives)](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    const double g = o.grad[0] / static_cast<double>(n);
    for (i64 r = 0; r < n; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (i64 c = 0; c < n; ++c)
        if (c != r) mx = std::max(mx, p.value[r * n + c]);
      double sum = 0.0;
      for (i64 c = 0; c < n; ++c)
        if (c != r) sum += std::exp(p.value[r * n + c] - mx);
      for (i64 c = 0; c < n; ++c) {
        if (c == r) continue;
        const double prob = std::exp(p.value[r * n + c] - mx) / sum;
        p.grad[r * n + c] += g * prob;
      }
      p.grad[r * n + positives[static_cast<size_t>(r)]] -= g;
    }
  });
  return out;
}

Tensor roi_pool(const Tensor& map, std::vector<double> boxes, i64 ph, i64 pw) {
  if (map.ndim() != 3)
    fail(cat("roi_pool: expected a (C, H, W) map, got ", shape_str(map.shape())));
  if (boxes.size() % 4 != 0) fail("roi_pool: boxes must be quadruples");
  kernels::RoiDims d;
  d.e = static_cast<i64>(boxes.size() / 4);
  d.c = map.dim(0);
  d.h = map.dim(1);
  d.w = map.dim(2);
  d.ph = ph;
  d.pw = pw;
  for (i64 e = 0; e < d.e; ++e) {
    const double* b = boxes.data() + e * 4;
    if (!(b[2] > b[0]) || !(b[3] > b[1]))
      fail(cat("roi_pool: degenerate box for edge ", e, " after clamping"));
  }
  Tensor out = make_output("roi_pool", {d.e, d.c, ph, pw});
  kernels::roi_pool_forward(map.data(), boxes.data(), out.data(), d);
  finish_forward(out);
  attach(out, "roi_pool", {map}, [d, boxes = std::move(boxes)](TensorNode& o) {
    TensorNode& p = *o.parents[0];
    kernels::roi_pool_backward(o.grad.data(), boxes.data(), p.grad.data(), d);
  });
  return out;
}

}  // namespace formnet
