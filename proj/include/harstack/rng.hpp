#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace harstack {

/// Counter-based generator: output i of a stream is a pure function of
/// (key, i). Streams are derived from (seed, purpose tag, index), so work
/// items can run in any order or on any thread without changing results.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [0, bound). bound must be positive.
  std::size_t below(std::size_t bound) noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

/// Key for the stream identified by (seed, tag, index).
std::uint64_t derive_key(std::uint64_t seed, std::string_view tag, std::uint64_t index) noexcept;

inline Rng make_stream(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) noexcept {
  return Rng(derive_key(seed, tag, index));
}

/// Fisher-Yates shuffle driven by Rng (portable across standard libraries).
template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = rng.below(i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Draws `count` distinct values from [0, population) in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count, Rng& rng);

}  // namespace harstack
