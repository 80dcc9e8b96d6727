#pragma once

#include <cmath>
#include <cstdint>

namespace qv {

// SplitMix64 finalizer. Used both as a mixing function to derive stream
// states and as the generator step itself.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream: the state is a counter advanced by the SplitMix64
// increment, output is the finalized counter. Disjoint initial states give
// statistically independent streams, and a stream's output depends only on
// its derivation key, never on scheduling or call order elsewhere.
struct RngStream {
  std::uint64_t state = 0;

  std::uint64_t next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution. Hand-rolled so results are
  // identical across standard libraries.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Exponential with unit rate; uniform() < 1 so the log argument is > 0.
  double exponential() { return -std::log1p(-uniform()); }

  // Uniform integer in [0, n). n must be > 0. Uses 64-bit multiply-shift;
  // bias is negligible for the n used here and the mapping is portable.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }
};

// Derives a named stream from a master seed and up to three key words.
// Chained finalization keeps distinct keys from colliding in practice.
inline RngStream derive_stream(std::uint64_t master, std::uint64_t a,
                               std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(master ^ 0x6a09e667f3bcc909ULL);
  s = splitmix64(s ^ splitmix64(a ^ 0xbb67ae8584caa73bULL));
  s = splitmix64(s ^ splitmix64(b ^ 0x3c6ef372fe94f82bULL));
  s = splitmix64(s ^ splitmix64(c ^ 0xa54ff53a5f1d36f1ULL));
  return RngStream{s};
}

}  // namespace qv
