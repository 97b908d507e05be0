#pragma once

#include "formnet/common.hpp"

namespace formnet::kernels {

// Runtime switch between the OpenMP kernels and the serial reference ones.
// Both variants compute each output element with the same inner routine in
// the same order, so their results are bitwise identical; tests assert this.
bool parallel_enabled();
void set_parallel_enabled(bool on);

struct Conv2dDims {
  i64 n, cin, h, w;    // input
  i64 cout, kh, kw;    // kernel
  i64 sh, sw;          // strides
  i64 ho, wo;          // output spatial dims ("same" padding)
  i64 pad_t, pad_l;    // top/left padding
};

// "Same" padding: out = ceil(in / stride), TF-style pad split (extra on the
// bottom/right side).
Conv2dDims conv2d_dims(i64 n, i64 cin, i64 h, i64 w, i64 cout, i64 kh, i64 kw, i64 sh, i64 sw);

struct RoiDims {
  i64 e;             // number of boxes
  i64 c, h, w;       // feature map
  i64 ph, pw;        // pooled grid
};

namespace serial {
void matmul(const double* a, const double* b, double* out, i64 n, i64 k, i64 m);
void conv2d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* k, double* gx, const Conv2dDims& d);
void conv2d_backward_kernel(const double* x, const double* gy, double* gk, double* gbias,
                            const Conv2dDims& d);
// boxes: e rows of (x0, y0, x1, y1) in feature-map coordinates
void roi_pool_forward(const double* map, const double* boxes, double* out, const RoiDims& d);
void roi_pool_backward(const double* gout, const double* boxes, double* gmap, const RoiDims& d);
}  // namespace serial

namespace omp {
void matmul(const double* a, const double* b, double* out, i64 n, i64 k, i64 m);
void conv2d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* k, double* gx, const Conv2dDims& d);
void conv2d_backward_kernel(const double* x, const double* gy, double* gk, double* gbias,
                            const Conv2dDims& d);
void roi_pool_forward(const double* map, const double* boxes, double* out, const RoiDims& d);
void roi_pool_backward(const double* gout, const double* boxes, double* gmap, const RoiDims& d);
}  // namespace omp

// Dispatchers used by the tensor ops.
void matmul(const double* a, const double* b, double* out, i64 n, i64 k, i64 m);
void conv2d_forward(const double* x, const double* k, const double* bias, double* y,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* gy, const double* k, double* gx, const Conv2dDims& d);
void conv2d_backward_kernel(const double* x, const double* gy, double* gk, double* gbias,
                            const Conv2dDims& d);
void roi_pool_forward(const double* map, const double* boxes, double* out, const RoiDims& d);
void roi_pool_backward(const double* gout, const double* boxes, double* gmap, const RoiDims& d);

}  // namespace formnet::kernels
