#include "formnet/common.hpp"

#include <cmath>

namespace formnet {

namespace {
bool g_fp64 = false;
bool g_debug_checks = false;
}  // namespace

bool fp64_mode() { return g_fp64; }
void set_fp64_mode(bool on) { g_fp64 = on; }

bool debug_checks() { return g_debug_checks; }
void set_debug_checks(bool on) { g_debug_checks = on; }

void round_storage(std::span<double> buf) {
  if (g_fp64) return;
  for (double& v : buf) v = static_cast<double>(static_cast<float>(v));
}

std::string shape_str(const std::vector<i64>& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

void fail(const std::string& msg) { throw std::runtime_error(msg); }

u64 hash_string(std::string_view s) {
  // FNV-1a 64
  u64 h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

u64 mix_seed(u64 a, u64 b) {
  u64 z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::next_normal() {
  // Box-Muller; u clamped away from 0 so log stays finite
  double u = next_double();
  double v = next_double();
  if (u < 1e-300) u = 1e-300;
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

double Rng::next_trunc_normal(double std_dev) {
  for (;;) {
    double z = next_normal();
    if (std::abs(z) <= 2.0) return z * std_dev;
  }
}

}  // namespace formnet
