#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace xmaml {

/// Mixes a root seed with a label and indices, e.g.
/// derive_seed(root, "meta", {aux, run}). Streams derived this way do not
/// depend on scheduling, so results are stable under parallelism.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::initializer_list<std::uint64_t> indices = {});

/// Stable 64-bit FNV-1a hash of a string.
std::uint64_t fnv1a(std::string_view text);

/// Random stream with platform-independent distributions. The engine is
/// std::mt19937_64; the draws below avoid the implementation-defined
/// std:: distributions so results match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased. n must be positive.
  std::size_t below(std::size_t n);
  /// Standard normal (Box-Muller, one value per call).
  double normal();

  /// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace xmaml
