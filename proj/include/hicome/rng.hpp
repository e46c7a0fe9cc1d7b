#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

namespace hicome {

// Deterministic, serializable RNG (xoshiro256** seeded via splitmix64).
// Used everywhere instead of <random> distributions so that results are
// reproducible across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }

  // Derive an independent stream, e.g. rng.fork(epoch, pair_index).
  Rng fork(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
    uint64_t x = s_[0] ^ (a * 0x9e3779b97f4a7c15ULL);
    x ^= (b + 0x2545f4914f6cdd1dULL) * 0xbf58476d1ce4e5b9ULL;
    x ^= (c + 0x94d049bb133111ebULL) * 0xd6e8feb86659fd93ULL;
    return Rng(x ^ s_[1]);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    // Modulo bias is negligible for n << 2^64 and keeps the stream simple.
    return n == 0 ? 0 : next_u64() % n;
  }

  // Standard normal via Box-Muller (one value per call, no cached state so
  // serialization stays a 4-word copy).
  double normal() {
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Normal truncated to [-2 sigma, 2 sigma].
  double truncated_normal(double sigma) {
    double z = normal();
    while (std::fabs(z) > 2.0) z = normal();
    return z * sigma;
  }

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::array<uint64_t, 4> s_{};
};

// FNV-1a, used for input digests in run manifests.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace hicome
