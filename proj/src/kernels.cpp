#include "formnet/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace formnet::kernels {

namespace {
bool g_parallel = true;

// --------------------------------------------------------------------------
// Shared inner routines. Serial and OpenMP drivers both call these, element
// by element in the same order, which keeps the two variants bitwise equal.
// --------------------------------------------------------------------------

inline void matmul_row(const double* a_row, const double* b, double* out_row, i64 k, i64 m) {
  std::fill(out_row, out_row + m, 0.0);
  for (i64 kk = 0; kk < k; ++kk) {
    const double av = a_row[kk];
    const double* b_row = b + kk * m;
    for (i64 j = 0; j < m; ++j) out_row[j] += av * b_row[j];
  }
}

inline double conv_cell(const double* x, const double* kern, const Conv2dDims& d, i64 n, i64 co,
                        i64 oy, i64 ox) {
  double acc = 0.0;
  const i64 iy0 = oy * d.sh - d.pad_t;
  const i64 ix0 = ox * d.sw - d.pad_l;
  for (i64 ci = 0; ci < d.cin; ++ci) {
    const double* xp = x + ((n * d.cin + ci) * d.h) * d.w;
    const double* kp = kern + ((co * d.cin + ci) * d.kh) * d.kw;
    for (i64 ky = 0; ky < d.kh; ++ky) {
      const i64 iy = iy0 + ky;
      if (iy < 0 || iy >= d.h) continue;
      for (i64 kx = 0; kx < d.kw; ++kx) {
        const i64 ix = ix0 + kx;
        if (ix < 0 || ix >= d.w) continue;
        acc += xp[iy * d.w + ix] * kp[ky * d.kw + kx];
      }
    }
  }
  return acc;
}

inline double conv_input_grad_cell(const double* gy, const double* kern, const Conv2dDims& d,
                                   i64 n, i64 ci, i64 iy, i64 ix) {
  double acc = 0.0;
  for (i64 co = 0; co < d.cout; ++co) {
    const double* gyp = gy + ((n * d.cout + co) * d.ho) * d.wo;
    const double* kp = kern + ((co * d.cin + ci) * d.kh) * d.kw;
    for (i64 ky = 0; ky < d.kh; ++ky) {
      const i64 oy_num = iy + d.pad_t - ky;
      if (oy_num < 0 || oy_num % d.sh != 0) continue;
      const i64 oy = oy_num / d.sh;
      if (oy >= d.ho) continue;
      for (i64 kx = 0; kx < d.kw; ++kx) {
        const i64 ox_num = ix + d.pad_l - kx;
        if (ox_num < 0 || ox_num % d.sw != 0) continue;
        const i64 ox = ox_num / d.sw;
        if (ox >= d.wo) continue;
        acc += gyp[oy * d.wo + ox] * kp[ky * d.kw + kx];
      }
    }
  }
  return acc;
}

// Accumulates the kernel and bias gradients owned by one output channel.
inline void conv_kernel_grad_channel(const double* x, const double* gy, double* gk, double* gbias,
                                     const Conv2dDims& d, i64 co) {
  double bias_acc = 0.0;
  for (i64 n = 0; n < d.n; ++n) {
    const double* gyp = gy + ((n * d.cout + co) * d.ho) * d.wo;
    for (i64 oy = 0; oy < d.ho; ++oy) {
      for (i64 ox = 0; ox < d.wo; ++ox) {
        const double g = gyp[oy * d.wo + ox];
        if (g == 0.0) continue;
        bias_acc += g;
        const i64 iy0 = oy * d.sh - d.pad_t;
        const i64 ix0 = ox * d.sw - d.pad_l;
        for (i64 ci = 0; ci < d.cin; ++ci) {
          const double* xp = x + ((n * d.cin + ci) * d.h) * d.w;
          double* gkp = gk + ((co * d.cin + ci) * d.kh) * d.kw;
          for (i64 ky = 0; ky < d.kh; ++ky) {
            const i64 iy = iy0 + ky;
            if (iy < 0 || iy >= d.h) continue;
            for (i64 kx = 0; kx < d.kw; ++kx) {
              const i64 ix = ix0 + kx;
              if (ix < 0 || ix >= d.w) continue;
              gkp[ky * d.kw + kx] += g * xp[iy * d.w + ix];
            }
          }
        }
      }
    }
  }
  gbias[co] += bias_acc;
}

struct BilinearTap {
  i64 idx[4];
  double w[4];
};

// Bilinear sample at (y, x) on an h*w grid, coordinates clamped to the border.
inline BilinearTap bilinear_taps(double y, double x, i64 h, i64 w) {
  y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
  x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
  i64 y0 = static_cast<i64>(y);
  i64 x0 = static_cast<i64>(x);
  if (y0 > h - 2) y0 = std::max<i64>(h - 2, 0);
  if (x0 > w - 2) x0 = std::max<i64>(w - 2, 0);
  i64 y1 = std::min(y0 + 1, h - 1);
  i64 x1 = std::min(x0 + 1, w - 1);
  const double ly = y - static_cast<double>(y0);
  const double lx = x - static_cast<double>(x0);
  BilinearTap t;
  t.idx[0] = y0 * w + x0;
  t.idx[1] = y0 * w + x1;
  t.idx[2] = y1 * w + x0;
  t.idx[3] = y1 * w + x1;
  t.w[0] = (1.0 - ly) * (1.0 - lx);
  t.w[1] = (1.0 - ly) * lx;
  t.w[2] = ly * (1.0 - lx);
  t.w[3] = ly * lx;
  return t;
}

// 2x2 sample points per pooled cell, averaged (RoIAlign style).
inline void roi_cell_points(const double* box, const RoiDims& d, i64 py, i64 px, double ys[2],
                            double xs[2]) {
  const double x0 = box[0], y0 = box[1], x1 = box[2], y1 = box[3];
  const double cell_h = (y1 - y0) / static_cast<double>(d.ph);
  const double cell_w = (x1 - x0) / static_cast<double>(d.pw);
  for (int s = 0; s < 2; ++s) {
    ys[s] = y0 + (static_cast<double>(py) + (s + 0.5) / 2.0) * cell_h;
    xs[s] = x0 + (static_cast<double>(px) + (s + 0.5) / 2.0) * cell_w;
  }
}

inline void roi_pool_one(const double* map, const double* box, double* out, const RoiDims& d,
                         i64 c) {
  const double* ch = map + c * d.h * d.w;
  for (i64 py = 0; py < d.ph; ++py) {
    for (i64 px = 0; px < d.pw; ++px) {
      double ys[2], xs[2];
      roi_cell_points(box, d, py, px, ys, xs);
      double acc = 0.0;
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          BilinearTap t = bilinear_taps(ys[sy], xs[sx], d.h, d.w);
          acc += t.w[0] * ch[t.idx[0]] + t.w[1] * ch[t.idx[1]] + t.w[2] * ch[t.idx[2]] +
                 t.w[3] * ch[t.idx[3]];
        }
      out[py * d.pw + px] = acc * 0.25;
    }
  }
}

// Scatters one channel's gradient across every box; channels are independent
// so the channel loop is the parallel axis.
inline void roi_pool_backward_channel(const double* gout, const double* boxes, double* gmap,
                                      const RoiDims& d, i64 c) {
  double* ch = gmap + c * d.h * d.w;
  for (i64 e = 0; e < d.e; ++e) {
    const double* box = boxes + e * 4;
    const double* g = gout + ((e * d.c + c) * d.ph) * d.pw;
    for (i64 py = 0; py < d.ph; ++py) {
      for (i64 px = 0; px < d.pw; ++px) {
        const double gv = g[py * d.pw + px] * 0.25;
        if (gv == 0.0) continue;
        double ys[2], xs[2];
        roi_cell_points(box, d, py, px, ys, xs);
        for (int sy = 0; sy < 2; ++sy)
          for (int sx = 0; sx < 2; ++sx) {
            BilinearTap t = bilinear_taps(ys[sy], xs[sx], d.h, d.w);
            for (int i = 0; i < 4; ++i) ch[t.idx[i]] += gv * t.w[i];
          }
      }
    }
  }
}

// --------------------------------------------------------------------------
// Drivers. `par` selects the OpenMP path at runtime; the work per iteration
// is identical either way.
// --------------------------------------------------------------------------

void matmul_impl(const double* a, const double* b, double* out, i64 n, i64 k, i64 m, bool par) {
#pragma omp parallel for schedule(static) if (par && n > 1)
  for (i64 i = 0; i < n; ++i) matmul_row(a + i * k, b, out + i * m, k, m);
}

void conv2d_forward_impl(const double* x, const double* kern, const double* bias, double* y,
                         const Conv2dDims& d, bool par) {
  const i64 rows = d.n * d.cout * d.ho;
#pragma omp parallel for schedule(static) if (par && rows > 1)
  for (i64 r = 0; r < rows; ++r) {
    const i64 oy = r % d.ho;
    const i64 co = (r / d.ho) % d.cout;
    const i64 n = r / (d.ho * d.cout);
    double* yp = y + r * d.wo;
    const double bv = bias ? bias[co] : 0.0;
    for (i64 ox = 0; ox < d.wo; ++ox) yp[ox] = conv_cell(x, kern, d, n, co, oy, ox) + bv;
  }
}

void conv2d_backward_input_impl(const double* gy, const double* kern, double* gx,
                                const Conv2dDims& d, bool par) {
  const i64 rows = d.n * d.cin * d.h;
#pragma omp parallel for schedule(static) if (par && rows > 1)
  for (i64 r = 0; r < rows; ++r) {
    const i64 iy = r % d.h;
    const i64 ci = (r / d.h) % d.cin;
    const i64 n = r / (d.h * d.cin);
    double* gp = gx + r * d.w;
    for (i64 ix = 0; ix < d.w; ++ix) gp[ix] += conv_input_grad_cell(gy, kern, d, n, ci, iy, ix);
  }
}

void conv2d_backward_kernel_impl(const double* x, const double* gy, double* gk, double* gbias,
                                 const Conv2dDims& d, bool par) {
#pragma omp parallel for schedule(static) if (par && d.cout > 1)
  for (i64 co = 0; co < d.cout; ++co) conv_kernel_grad_channel(x, gy, gk, gbias, d, co);
}

void roi_pool_forward_impl(const double* map, const double* boxes, double* out, const RoiDims& d,
                           bool par) {
  const i64 rows = d.e * d.c;
#pragma omp parallel for schedule(static) if (par && rows > 1)
  for (i64 r = 0; r < rows; ++r) {
    const i64 c = r % d.c;
    const i64 e = r / d.c;
    roi_pool_one(map, boxes + e * 4, out + r * d.ph * d.pw, d, c);
  }
}

void roi_pool_backward_impl(const double* gout, const double* boxes, double* gmap,
                            const RoiDims& d, bool par) {
#pragma omp parallel for schedule(static) if (par && d.c > 1)
  for (i64 c = 0; c < d.c; ++c) roi_pool_backward_channel(gout, boxes, gmap, d, c);
}

}  // namespace

bool parallel_enabled() { return g_parallel; }
void set_parallel_enabled(bool on) { g_parallel = on; }

Conv2dDims conv2d_dims(i64 n, i64 cin, i64 h, i64 w, i64 cout, i64 kh, i64 kw, i64 sh, i64 sw) {
  if (sh <= 0 || sw <= 0) fail(cat("conv2d: non-positive stride (", sh, ", ", sw, ")"));
  Conv2dDims d;
  d.n = n;
  d.cin = cin;
  d.h = h;
  d.w = w;
  d.cout = cout;
  d.kh = kh;
  d.kw = kw;
  d.sh = sh;
  d.sw = sw;
  d.ho = (h + sh - 1) / sh;
  d.wo = (w + sw - 1) / sw;
  const i64 pad_h = std::max<i64>(0, (d.ho - 1) * sh + kh - h);
  const i64 pad_w = std::max<i64>(0, (d.wo - 1) * sw + kw - w);
  d.pad_t = pad_h / 2;
  d.pad_l = pad_w / 2;
  return d;
}

namespace serial {
void matmul(const double* a, const double* b, double* out, i64 n, i64 k, i64 m) {
  matmul_impl(a, b, out, n, k, m, false);
}
void conv2d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv2dDims& d) {
  conv2d_forward_impl(x, k, bias, y, d, false);
}
void conv2d_backward_input(const double* gy, const double* k, double* gx, const Conv2dDims& d) {
  conv2d_backward_input_impl(gy, k, gx, d, false);
}
void conv2d_backward_kernel(const double* x, const double* gy, double* gk, double* gbias,
                            const Conv2dDims& d) {
  conv2d_backward_kernel_impl(x, gy, gk, gbias, d, false);
}
void roi_pool_forward(const double* map, const double* boxes, double* out, const RoiDims& d) {
  roi_pool_forward_impl(map, boxes, out, d, false);
}
void roi_pool_backward(const double* gout, const double* boxes, double* gmap, const RoiDims& d) {
  roi_pool_backward_impl(gout, boxes, gmap, d, false);
}
}  // namespace serial

namespace omp {
void matmul(const double* a, const double* b, double* out, i64 n, i64 k, i64 m) {
  matmul_impl(a, b, out, n, k, m, true);
}
void conv2d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv2dDims& d) {
  conv2d_forward_impl(x, k, bias, y, d, true);
}
void conv2d_backward_input(const double* gy, const double* k, double* gx, const Conv2dDims& d) {
  conv2d_backward_input_impl(gy, k, gx, d, true);
}
void conv2d_backward_kernel(const double* x, const double* gy, double* gk, double* gbias,
                            const Conv2dDims& d) {
  conv2d_backward_kernel_impl(x, gy, gk, gbias, d, true);
}
void roi_pool_forward(const double* map, const double* boxes, double* out, const RoiDims& d) {
  roi_pool_forward_impl(map, boxes, out, d, true);
}
void roi_pool_backward(const double* gout, const double* boxes, double* gmap, const RoiDims& d) {
  roi_pool_backward_impl(gout, boxes, gmap, d, true);
}
}  // namespace omp

void matmul(const double* a, const double* b, double* out, i64 n, i64 k, i64 m) {
  matmul_impl(a, b, out, n, k, m, g_parallel);
}
void conv2d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv2dDims& d) {
  conv2d_forward_impl(x, k, bias, y, d, g_parallel);
}
void conv2d_backward_input(const double* gy, const double* k, double* gx, const Conv2dDims& d) {
  conv2d_backward_input_impl(gy, k, gx, d, g_parallel);
}
void conv2d_backward_kernel(const double* x, const double* gy, double* gk, double* gbias,
                            const Conv2dDims& d) {
  conv2d_backward_kernel_impl(x, gy, gk, gbias, d, g_parallel);
}
void roi_pool_forward(const double* map, const double* boxes, double* out, const RoiDims& d) {
  roi_pool_forward_impl(map, boxes, out, d, g_parallel);
}
void roi_pool_backward(const double* gout, const double* boxes, double* gmap, const RoiDims& d) {
  roi_pool_backward_impl(gout, boxes, gmap, d, g_parallel);
}

}  // namespace formnet::kernels
