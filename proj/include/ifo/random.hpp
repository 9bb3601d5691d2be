#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace ifo {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// master seed so that parallel work is schedule-independent.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(mix64(master) ^ stream) ^ (index * 0xd1b54a32d192ed03ULL));
}

// Named streams so that collection, rollouts and evaluation never share seeds.
namespace stream {
inline constexpr std::uint64_t kPreDemos = 0x70726500;
inline constexpr std::uint64_t kExpertDemos = 0x65787000;
inline constexpr std::uint64_t kExpertTies = 0x74696500;
inline constexpr std::uint64_t kRollouts = 0x726f6c00;
inline constexpr std::uint64_t kEvaluation = 0x6576616c;
inline constexpr std::uint64_t kInit = 0x696e6974;
inline constexpr std::uint64_t kTraining = 0x74726e00;
inline constexpr std::uint64_t kSampling = 0x73706c00;
inline constexpr std::uint64_t kRandomPolicy = 0x726e6400;
}  // namespace stream

/// Deterministic random source. Only the engine comes from <random>; the
/// distributions are written out so results do not depend on the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ifo
