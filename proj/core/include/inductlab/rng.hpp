#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace inductlab {

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Seed-splitting rule used by every sweep: the seed for item `index` of stream
// `stream` under `root` is mix64(mix64(root ^ mix64(stream)) + index). Streams
// keep unrelated consumers (prompts, permutations, head picks) decorrelated.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index);

namespace streams {
inline constexpr std::uint64_t kScorerPrompt = 1;
inline constexpr std::uint64_t kProbePermutation = 2;
inline constexpr std::uint64_t kHeadSelection = 3;
inline constexpr std::uint64_t kIclPrompt = 4;
inline constexpr std::uint64_t kWeights = 5;
inline constexpr std::uint64_t kBatches = 6;
}  // namespace streams

// Platform-independent generator. The std distributions are implementation
// defined, so bounded integers and normals are derived here from the raw
// mt19937_64 stream, which the standard pins down exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, n); n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Uniform in [0, 1) with 53 bits.
  double uniform01();
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct values from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace inductlab
