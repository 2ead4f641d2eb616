#pragma once

#include <cstdint>
#include <vector>

namespace sri {

// Counter-based splitmix64 stream. Every random quantity in the project comes
// from one of these so results are bit-reproducible for a fixed seed no matter
// how work is scheduled: parallel code derives an independent child stream per
// task index instead of sharing a sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Child stream for task `index`; safe to call repeatedly with distinct
  // indices. Uses a two-input hash so (seed, index) pairs do not collide with
  // sequential next_u64 output in practice.
  Rng fork(std::uint64_t index) const {
    std::uint64_t h = mix(state_ ^ mix(index + 0x632be59bd9b4e019ull));
    return Rng(h);
  }

  // Uniform on [0, n). Unbiased via rejection on the top of the range.
  std::uint64_t below(std::uint64_t n) {
    // n == 0 is a caller bug; fold to 0 to keep the function total.
    if (n <= 1) return 0;
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via inverse CDF (normal_quantile is deterministic and
  // accurate to ~1e-15, see normal.hpp).
  double normal();

  // Fisher-Yates over an index/value span.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct values from [0, n), in randomized order (partial Fisher-Yates).
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k);

  std::uint64_t state() const { return state_; }

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

 private:
  std::uint64_t state_;
};

}  // namespace sri
