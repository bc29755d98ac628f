#include "embedsom/rng.hpp"

#include <cmath>
#include <numbers>

namespace embedsom {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
    // splitmix64 finalizer
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) noexcept
    : seed_(seed), key_(mix64(seed ^ mix64(stream + kGolden))) {}

std::uint64_t Rng::next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
    // Lemire's multiply-shift with rejection
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(next_u64()) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream) const noexcept {
    return Rng(mix64(key_ ^ mix64(counter_)), stream);
}

}  // namespace embedsom
