#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ntt {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Stateless counter-based generator: the value at a counter depends only on
/// (seed, stream, counter), so any rank can produce any element of a
/// distributed random array without coordination.
class CounterRng {
public:
    constexpr CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull))) {}

    constexpr std::uint64_t bits(std::uint64_t counter) const noexcept {
        return splitmix64(key_ ^ splitmix64(counter));
    }

    /// Uniform on [0, 1).
    constexpr double uniform(std::uint64_t counter) const noexcept {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on counters (2k, 2k + 1).
    double gaussian(std::uint64_t k) const noexcept {
        const double u1 = (static_cast<double>(bits(2 * k) >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform(2 * k + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

/// Stream identifiers keep unrelated random arrays decorrelated.
namespace streams {
inline constexpr std::uint64_t kCore = 0x100;
inline constexpr std::uint64_t kNoise = 0x200;
inline constexpr std::uint64_t kNmfW = 0x300;
inline constexpr std::uint64_t kNmfH = 0x400;
inline constexpr std::uint64_t kProbe = 0x500;
}  // namespace streams

}  // namespace ntt
