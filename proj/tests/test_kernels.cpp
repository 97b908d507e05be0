#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "formnet/kernels.hpp"
#include "formnet/ops.hpp"
#include "testutil.hpp"

using namespace formnet;
using namespace formnet::kernels;
using formnet::testing::random_tensor;

namespace {

std::vector<double> rand_vec(i64 n, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.next_uniform(-2, 2);
  return v;
}

}  // namespace

TEST_CASE("matmul: OpenMP matches the serial reference bitwise") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const i64 n = rng.next_range(1, 40), k = rng.next_range(1, 40), m = rng.next_range(1, 40);
    auto a = rand_vec(n * k, rng), b = rand_vec(k * m, rng);
    std::vector<double> ys(static_cast<size_t>(n * m)), yp(static_cast<size_t>(n * m));
    serial::matmul(a.data(), b.data(), ys.data(), n, k, m);
    omp::matmul(a.data(), b.data(), yp.data(), n, k, m);
    CHECK(ys == yp);
  }
}

TEST_CASE("conv2d forward/backward: OpenMP matches serial bitwise") {
  Rng rng(2);
  for (int trial = 0; trial < 8; ++trial) {
    const i64 n = rng.next_range(1, 2), cin = rng.next_range(1, 3), h = rng.next_range(3, 12);
    const i64 w = rng.next_range(3, 12), cout = rng.next_range(1, 4);
    const i64 kh = rng.next_range(1, 3), kw = rng.next_range(1, 3);
    const i64 sh = rng.next_range(1, 2), sw = rng.next_range(1, 2);
    Conv2dDims d = conv2d_dims(n, cin, h, w, cout, kh, kw, sh, sw);
    auto x = rand_vec(n * cin * h * w, rng);
    auto k = rand_vec(cout * cin * kh * kw, rng);
    auto bias = rand_vec(cout, rng);
    auto gy = rand_vec(n * cout * d.ho * d.wo, rng);

    std::vector<double> ys(static_cast<size_t>(n * cout * d.ho * d.wo)), yp = ys;
    serial::conv2d_forward(x.data(), k.data(), bias.data(), ys.data(), d);
    omp::conv2d_forward(x.data(), k.data(), bias.data(), yp.data(), d);
    CHECK(ys == yp);

    std::vector<double> gxs(x.size(), 0.0), gxp(x.size(), 0.0);
    serial::conv2d_backward_input(gy.data(), k.data(), gxs.data(), d);
    omp::conv2d_backward_input(gy.data(), k.data(), gxp.data(), d);
    CHECK(gxs == gxp);

    std::vector<double> gks(k.size(), 0.0), gkp(k.size(), 0.0);
    std::vector<double> gbs(bias.size(), 0.0), gbp(bias.size(), 0.0);
    serial::conv2d_backward_kernel(x.data(), gy.data(), gks.data(), gbs.data(), d);
    omp::conv2d_backward_kernel(x.data(), gy.data(), gkp.data(), gbp.data(), d);
    CHECK(gks == gkp);
    CHECK(gbs == gbp);
  }
}

TEST_CASE("roi_pool: OpenMP matches serial bitwise") {
  Rng rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    RoiDims d;
    d.c = rng.next_range(1, 4);
    d.h = rng.next_range(5, 12);
    d.w = rng.next_range(5, 12);
    d.e = rng.next_range(1, 5);
    d.ph = 3;
    d.pw = 4;
    auto map = rand_vec(d.c * d.h * d.w, rng);
    std::vector<double> boxes;
    for (i64 e = 0; e < d.e; ++e) {
      const double x0 = rng.next_uniform(0, d.w - 2.0), y0 = rng.next_uniform(0, d.h - 2.0);
      boxes.insert(boxes.end(), {x0, y0, x0 + rng.next_uniform(0.5, d.w - x0 - 0.1),
                                 y0 + rng.next_uniform(0.5, d.h - y0 - 0.1)});
    }
    std::vector<double> outs(static_cast<size_t>(d.e * d.c * d.ph * d.pw)), outp = outs;
    serial::roi_pool_forward(map.data(), boxes.data(), outs.data(), d);
    omp::roi_pool_forward(map.data(), boxes.data(), outp.data(), d);
    CHECK(outs == outp);

    auto gout = rand_vec(d.e * d.c * d.ph * d.pw, rng);
    std::vector<double> gms(map.size(), 0.0), gmp(map.size(), 0.0);
    serial::roi_pool_backward(gout.data(), boxes.data(), gms.data(), d);
    omp::roi_pool_backward(gout.data(), boxes.data(), gmp.data(), d);
    CHECK(gms == gmp);
  }
}

TEST_CASE("op results are independent of the parallel switch") {
  Rng rng(4);
  Tensor a = random_tensor({17, 9}, rng);
  Tensor b = random_tensor({9, 13}, rng);
  set_parallel_enabled(false);
  Tensor y_serial = matmul(a, b);
  set_parallel_enabled(true);
  Tensor y_par = matmul(a, b);
  CHECK(y_serial.values() == y_par.values());
}

TEST_CASE("same-padding output geometry") {
  Conv2dDims d = conv2d_dims(1, 1, 8, 8, 1, 3, 3, 2, 2);
  CHECK(d.ho == 4);
  CHECK(d.wo == 4);
  d = conv2d_dims(1, 1, 7, 7, 1, 3, 3, 2, 2);
  CHECK(d.ho == 4);
  CHECK(d.wo == 4);
  d = conv2d_dims(1, 1, 3, 16, 1, 3, 3, 1, 2);
  CHECK(d.ho == 3);
  CHECK(d.wo == 8);
  CHECK_THROWS_AS(conv2d_dims(1, 1, 4, 4, 1, 3, 3, -1, 1), std::runtime_error);
}
