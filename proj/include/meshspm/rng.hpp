#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace meshspm {

// SplitMix64 generator. Used everywhere instead of <random> engines plus
// distributions because the standard distributions are implementation
// defined: the same seed must yield the same stream on every platform and
// compiler, or run manifests stop being reproducible.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double next_open_double() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Multiply-shift reduction; the modulo bias of
  // a 64-bit source over desk-scale n is far below anything observable.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Standard normal via Box-Muller; the second deviate is cached.
  double next_gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = next_open_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Distinct subsystems drawing from the same master seed get disjoint domain
// tags, so a run that uses one seed for noise generation, subsampling and
// permutation shuffles never feeds correlated streams to two of them.
namespace rng_domain {
constexpr std::uint64_t permutation = 0xA1;
constexpr std::uint64_t noise = 0xB2;
constexpr std::uint64_t subsample = 0xC3;
constexpr std::uint64_t signal = 0xD4;
constexpr std::uint64_t dosage = 0xE5;
constexpr std::uint64_t geometry = 0xF6;
}  // namespace rng_domain

// Independent stream for (master seed, domain, stream id). Streams are keyed
// by a counter so any subset of them can be generated in isolation:
// permutation k of a run never depends on permutations 1..k-1 having been
// drawn.
inline SplitMix64 stream_for(std::uint64_t master_seed, std::uint64_t domain,
                             std::uint64_t stream_id) {
  SplitMix64 mixer(master_seed ^ (0xD1B54A32D192ED03ull * (stream_id + 1)) ^
                   (0x9E6C63D0876A9A35ull * (domain + 1)));
  return SplitMix64(mixer.next());
}

// Fisher-Yates shuffle of 0..n-1.
inline std::vector<int> random_permutation(int n, SplitMix64& rng) {
  std::vector<int> perm(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

// k distinct indices out of 0..n-1 (partial Fisher-Yates), ascending order
// not guaranteed.
inline std::vector<int> random_subsample(int n, int k, SplitMix64& rng) {
  if (k < 0 || k > n) throw std::invalid_argument("subsample size out of range");
  std::vector<int> pool(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(
                    rng.next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
  }
  pool.resize(static_cast<size_t>(k));
  return pool;
}

}  // namespace meshspm
