#include "hiertax/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hiertax {

namespace {

std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive_seed(std::uint64_t root_seed, std::string_view purpose) {
    return mix(root_seed ^ fnv1a64(purpose));
}

SplitMix64 SplitMix64::stream(std::uint64_t root_seed, std::string_view purpose) {
    return SplitMix64(derive_seed(root_seed, purpose));
}

std::uint64_t SplitMix64::next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
}

double SplitMix64::uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
    if (n == 0) {
        throw std::invalid_argument("SplitMix64::below: n must be positive");
    }
    // Lemire multiply-shift; the bias is < n / 2^64 and irrelevant here.
    __extension__ using u128 = unsigned __int128;
    const auto wide = static_cast<u128>(next()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
}

std::int64_t SplitMix64::between(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) {
        throw std::invalid_argument("SplitMix64::between: empty range");
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(below(span));
}

double SplitMix64::normal() {
    // u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace hiertax
