#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace formnet {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// ---------------------------------------------------------------------------
// Precision mode. Storage is double; in 32-bit mode (the default) every op
// output and parameter value is rounded to the nearest float32, so buffers
// always hold float32-representable values and checkpoints round-trip
// bitwise. 64-bit mode disables the rounding; it exists for the
// finite-difference gradient oracles.
// ---------------------------------------------------------------------------
bool fp64_mode();
void set_fp64_mode(bool on);

// Debug-mode finiteness checks after each forward op.
bool debug_checks();
void set_debug_checks(bool on);

inline double round_storage_value(double v) {
  return static_cast<double>(static_cast<float>(v));
}

void round_storage(std::span<double> buf);

struct Fp64Guard {
  bool prev;
  explicit Fp64Guard(bool on) : prev(fp64_mode()) { set_fp64_mode(on); }
  ~Fp64Guard() { set_fp64_mode(prev); }
};

// ---------------------------------------------------------------------------
// Shape helpers
// ---------------------------------------------------------------------------
inline i64 shape_numel(const std::vector<i64>& shape) {
  i64 n = 1;
  for (i64 d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<i64>& shape);

[[noreturn]] void fail(const std::string& msg);

template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64 core). Distribution code is hand-rolled so
// outputs are identical on every platform; std:: distributions are not
// portable across standard library implementations.
// ---------------------------------------------------------------------------
u64 hash_string(std::string_view s);
u64 mix_seed(u64 a, u64 b);

class Rng {
 public:
  explicit Rng(u64 seed) : state_(seed) {}

  u64 next_u64() {
    u64 z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [0, n)
  i64 next_below(i64 n) {
    if (n <= 0) fail("Rng::next_below: n must be positive");
    return static_cast<i64>(next_u64() % static_cast<u64>(n));
  }

  i64 next_range(i64 lo, i64 hi_inclusive) { return lo + next_below(hi_inclusive - lo + 1); }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // standard normal via Box-Muller (no cached spare, keeps draw count obvious)
  double next_normal();

  // normal(0, std) truncated to 2 std, BERT-style init
  double next_trunc_normal(double std_dev);

  bool next_bernoulli(double p) { return next_double() < p; }

 private:
  u64 state_;
};

}  // namespace formnet
