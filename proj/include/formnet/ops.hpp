#pragma once

#include <cstdint>

#include "formnet/tensor.hpp"

namespace formnet {

// Elementwise; shapes must match exactly, or b may broadcast when a's shape
// is b's shape with extra leading batch dimensions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);

// Structural. Rows = first axis, cols = last axis; inner dims ride along.
Tensor concat_cols(const std::vector<Tensor>& xs);
Tensor slice_cols(const Tensor& x, i64 start, i64 len);
Tensor concat_rows(const std::vector<Tensor>& xs);
Tensor slice_rows(const Tensor& x, i64 start, i64 len);
Tensor gather_rows(const Tensor& x, std::vector<i64> idx);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, std::vector<i64> new_shape);

Tensor matmul(const Tensor& a, const Tensor& b);
// y = x W + b over the last axis of x
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);
// Disallowed positions get exactly zero weight; a row with no allowed key is
// an error (the ETC mask always allows the globals).
Tensor masked_softmax_rows(const Tensor& scores, const std::vector<std::uint8_t>& mask);

// x: (N, Cin, H, W), k: (Cout, Cin, kh, kw), bias: (Cout); "same" padding.
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, i64 stride_h, i64 stride_w);

// msgs: (M, h); out row i = mean of msgs rows with dst == i, zeros when none.
Tensor scatter_mean(const Tensor& msgs, std::vector<i64> dst, i64 num_nodes);

// u: (n, 1), v: (m, 1), b: (1) -> (n, m) with out[i][j] = u[i] + v[j] + b
Tensor broadcast_sum(const Tensor& u, const Tensor& v, const Tensor& b);
// s: single-element tensor; out = s * x
Tensor mul_scalar_tensor(const Tensor& x, const Tensor& s);

Tensor row_l2_normalize(const Tensor& x);

// Mean cross-entropy over rows of logits against integer targets.
Tensor cross_entropy_rows(const Tensor& logits, std::vector<i64> targets);

// Per row i of a square similarity matrix: -s[i, pos[i]] + logsumexp over
// j != i; returns the mean. The backbone of the NT-Xent loss.
Tensor infonce_rows(const Tensor& sims, std::vector<i64> positives);

// map: (C, H, W); boxes: E*(x0, y0, x1, y1) in map coordinates -> (E, C, ph, pw)
Tensor roi_pool(const Tensor& map, std::vector<double> boxes, i64 ph, i64 pw);

}  // namespace formnet
