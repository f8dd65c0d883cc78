#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace csna {

/// PCG32 (XSH-RR, 64-bit state). Every distribution below is implemented
/// here rather than taken from <random> so that streams are bitwise stable
/// across standard libraries.
class Pcg32 {
 public:
  Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}
  Pcg32(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, bound), unbiased.
  std::uint32_t bounded(std::uint32_t bound);
  /// Standard normal via the Marsaglia polar method.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = bounded(static_cast<std::uint32_t>(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t state() const { return state_; }
  std::uint64_t increment() const { return inc_; }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for a named substream: hash of (master, tag, index).
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index = 0);

/// Independent generator for (master, tag, index).
Pcg32 substream(std::uint64_t master, std::string_view tag,
                std::uint64_t index = 0);

}  // namespace csna
