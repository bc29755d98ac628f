#pragma once

#include "embedsom/core.hpp"

#include <cstdint>
#include <limits>
#include <span>

namespace embedsom {

/// Per-point k nearest landmarks. Row i lists landmark indices ordered by
/// ascending (squared distance, index).
struct NeighborList {
    Matrix<std::uint32_t> indices;  // n x k
    Matrix<float> sqdists;          // n x k

    std::size_t size() const noexcept { return indices.rows(); }
    std::size_t k() const noexcept { return indices.cols(); }
    bool operator==(const NeighborList &) const = default;
};

inline constexpr std::uint32_t kInvalidIndex = std::numeric_limits<std::uint32_t>::max();

/// Sum of squared coordinate differences. Throws `shape_mismatch` on unequal lengths.
float sq_euclidean(std::span<const float> a, std::span<const float> b);

namespace detail {

// Unchecked kernel shared by every backend so distances agree bit-for-bit.
inline float sq_euclidean_unchecked(const float *a, const float *b, std::size_t d) noexcept {
    float acc[4] = {0.f, 0.f, 0.f, 0.f};
    std::size_t i = 0;
    for (; i + 4 <= d; i += 4) {
        for (std::size_t l = 0; l < 4; ++l) {
            const float t = a[i + l] - b[i + l];
            acc[l] += t * t;
        }
    }
    for (; i < d; ++i) {
        const float t = a[i] - b[i];
        acc[0] += t * t;
    }
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

struct Candidate {
    float sqdist;
    std::uint32_t index;
};

// Strict (sqdist, index) ordering used everywhere a tie can occur.
inline bool closer(const Candidate &a, const Candidate &b) noexcept {
    return a.sqdist < b.sqdist || (a.sqdist == b.sqdist && a.index < b.index);
}

/// Exact k-NN of one point by linear scan and insertion into a sorted k-buffer.
void knn_base_row(std::span<const float> point, MatrixView<const float> landmarks, std::size_t k,
                  std::span<std::uint32_t> out_indices, std::span<float> out_sqdists);

/// Bitonic block-merge k-NN of one point. `scratch` must hold 2k candidates.
void knn_bitonic_row(std::span<const float> point, MatrixView<const float> landmarks, std::size_t k,
                     std::span<Candidate> scratch, std::span<std::uint32_t> out_indices,
                     std::span<float> out_sqdists);

/// Ascending bitonic sort of a power-of-two sized block.
void bitonic_sort(std::span<Candidate> block) noexcept;
/// Sorts a bitonic sequence ascending (the merge half of the network).
void bitonic_merge(std::span<Candidate> block) noexcept;

void check_finite(MatrixView<const float> m, const char *what);

}  // namespace detail

/// Reference selection. Preconditions: 1 <= k <= g, finite inputs.
NeighborList knn_base(MatrixView<const float> points, MatrixView<const float> landmarks, std::size_t k,
                      std::size_t workers = 1);

/// Selection that keeps a sorted k-block of current best candidates and
/// merges successive bitonic-sorted k-blocks of fresh distances into it,
/// so only 2k candidates are live per point. Requires k a power of two,
/// 4 <= k <= g. Output is identical to `knn_base`.
NeighborList knn_bitonic(MatrixView<const float> points, MatrixView<const float> landmarks, std::size_t k,
                         std::size_t workers = 1);

NeighborList knn(MatrixView<const float> points, MatrixView<const float> landmarks, std::size_t k,
                 KnnBackend backend, std::size_t workers = 1);

}  // namespace embedsom
