#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace promptguard {

// splitmix64 stream. All randomness in training comes from one of these so
// runs are reproducible from a single u64 seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, bound) by modulo reduction; bound must be nonzero.
  std::size_t below(std::size_t bound) { return static_cast<std::size_t>(next() % bound); }

  // Independent stream for sub-task `index` (e.g. one tree of a forest).
  static SplitMix64 derive(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 mixer(seed ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return SplitMix64(mixer.next());
  }

 private:
  std::uint64_t state_;
};

// Fisher-Yates with the stream above.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng.below(i)]);
  }
}

}  // namespace promptguard
