#pragma once

#include <cstdint>

namespace embedsom {

/// Counter-based generator: the i-th output is a fixed bijective mix of
/// (key, i), so streams are reproducible on every platform and `split`
/// yields independent streams for parallel work.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n) noexcept;
    /// Standard normal (Box-Muller, two uniforms per call).
    double normal() noexcept;

    Rng split(std::uint64_t stream) const noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

    bool operator==(const Rng &) const = default;

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace embedsom
