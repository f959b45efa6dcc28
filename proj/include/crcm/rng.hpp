#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace crcm {

inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a stream index.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return mix64(seed ^ mix64(stream + 1));
}

// Seeded RNG with hand-rolled draw helpers. std::mt19937_64 output is fully
// specified by the standard; the distributions below avoid <random>
// distribution classes, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform01() { return double(gen_() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n), unbiased via rejection
  uint64_t below(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Indices of a Bernoulli(rate) mask over [0, n), sampled with geometric skips
// so the draw count scales with the number of hits rather than n.
inline void sample_bernoulli_indices(Rng& rng, double rate, size_t n,
                                     std::vector<uint32_t>& out) {
  out.clear();
  if (rate <= 0.0) return;
  const double inv_log_keep = 1.0 / std::log1p(-rate);
  double j = std::log(1.0 - rng.uniform01()) * inv_log_keep;
  while (j < static_cast<double>(n)) {
    out.push_back(static_cast<uint32_t>(j));
    j = std::floor(j) + 1.0 + std::log(1.0 - rng.uniform01()) * inv_log_keep;
  }
}

}  // namespace crcm
