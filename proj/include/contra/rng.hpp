#pragma once

// Randomness for the whole library.
//
// Generator: SplitMix64 (Steele, Lea & Flood 2014). A SeedContext hashes its
// (seed, stream) pair into a 64-bit key with FNV-1a over the stream label
// followed by one SplitMix64 finalizer round. Two kinds of draws exist:
//
//   * counter draws  draw(a, b): mix(mix(key + (a+1)*G) + (b+1)*G), a pure
//     function of (seed, stream, a, b). Used wherever the value must not depend
//     on how a batch was split (dropout masks, TokenDrop) so that sub-batch and
//     full-batch forwards see identical randomness.
//   * sequential draws through Rng, the plain SplitMix64 sequence seeded by key.
//
// G = 0x9E3779B97F4A7C15 and mix() is the SplitMix64 finalizer. Uniform doubles
// take the top 53 bits. Normals use Box-Muller, gammas Marsaglia-Tsang.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace contra {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Top 53 bits mapped to [0, 1).
constexpr double bits_to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class SeedContext {
 public:
  SeedContext() = default;
  SeedContext(std::uint64_t seed, std::string stream) : seed_(seed), stream_(std::move(stream)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& stream() const noexcept { return stream_; }
  std::uint64_t key() const noexcept { return splitmix64_mix(seed_ ^ fnv1a64(stream_)); }

  /// Child stream "<stream>/<label>" under the same seed.
  SeedContext derive(std::string_view label) const;
  /// Child stream "<stream>/<label>#<index>".
  SeedContext derive(std::string_view label, std::uint64_t index) const;

  std::uint64_t draw(std::uint64_t a, std::uint64_t b = 0) const noexcept {
    const std::uint64_t inner = splitmix64_mix(key() + (a + 1) * kGolden);
    return splitmix64_mix(inner + (b + 1) * kGolden);
  }
  double uniform(std::uint64_t a, std::uint64_t b = 0) const noexcept {
    return bits_to_unit(draw(a, b));
  }

  friend bool operator==(const SeedContext&, const SeedContext&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::string stream_;
};

/// Sequential SplitMix64 generator.
class Rng {
 public:
  explicit Rng(const SeedContext& ctx) : state_(ctx.key()) {}
  explicit Rng(std::uint64_t state) : state_(state) {}

  std::uint64_t next() noexcept {
    state_ += kGolden;
    return splitmix64_mix(state_);
  }
  double uniform() noexcept { return bits_to_unit(next()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), n > 0, without modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;
  /// log of a Gamma(shape, 1) variate; stays finite for tiny shapes.
  double log_gamma_variate(double shape) noexcept;
  /// Beta(a, b) via the ratio of gammas evaluated in log space.
  double beta(double a, double b) noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) noexcept {
    shuffle(std::span<T>(items));
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace contra
