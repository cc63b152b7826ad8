#pragma once

#include <cstdint>
#include <limits>

namespace poisloc {

/// Stream purposes for keyed random streams. Each purpose draws from an
/// independent counter sequence under the same seed.
enum class Stream : std::uint64_t {
  Count = 1,
  Position = 2,
  Marks = 3,
  Attenuation = 4,
  Perturbation = 5,
  Krylov = 6,
  Realization = 7,
  Engineering = 8,
};

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives a child seed from (master seed, realization index, purpose).
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t realization,
                                           Stream purpose = Stream::Realization) {
  std::uint64_t k = mix64(master);
  k = mix64(k ^ mix64(realization + 0x632be59bd9b4e019ULL));
  return mix64(k ^ (static_cast<std::uint64_t>(purpose) * 0xd1b54a32d192ed03ULL));
}

/// Counter-based generator: the n-th output is a pure function of
/// (key, n). Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng(std::uint64_t seed, Stream purpose)
      : key_(derive_seed(seed, 0, purpose)) {}
  constexpr explicit CounterRng(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform on [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  constexpr std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace poisloc
