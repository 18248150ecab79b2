#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace hiertax {

/// SplitMix64 generator. Every source of randomness in the project draws
/// from one of these, keyed by (root seed, purpose label), so that runs are
/// reproducible bit-for-bit across platforms with IEEE-754 doubles.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    /// Substream for a named purpose ("prototypes", "noise", "shuffle", ...).
    static SplitMix64 stream(std::uint64_t root_seed, std::string_view purpose);

    std::uint64_t next();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    /// Uniform integer in [lo, hi].
    std::int64_t between(std::int64_t lo, std::int64_t hi);

    /// Standard normal via Box-Muller. Consumes two uniforms per call and
    /// returns the cosine branch only; no state is cached between calls.
    double normal();

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
};

/// Seed for a purpose-labelled substream (FNV-1a of the label mixed into the
/// root seed, then one SplitMix64 finalization).
std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view purpose);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

template <typename T>
void shuffle(std::span<T> items, SplitMix64& rng) {
    // Fisher-Yates, high index down.
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

} // namespace hiertax
