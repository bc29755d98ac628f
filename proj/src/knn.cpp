#include "embedsom/knn.hpp"

#include "embedsom/parallel.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace embedsom {

float sq_euclidean(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size())
        throw Error(ErrorKind::Contract, "shape_mismatch",
                    "vector lengths differ (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                        ")");
    return detail::sq_euclidean_unchecked(a.data(), b.data(), a.size());
}

namespace detail {

void check_finite(MatrixView<const float> m, const char *what) {
    for (float v : m.data())
        if (!std::isfinite(v))
            throw Error(ErrorKind::Input, "non_finite", std::string("non-finite value in ") + what);
}

void knn_base_row(std::span<const float> point, MatrixView<const float> landmarks, std::size_t k,
                  std::span<std::uint32_t> out_indices, std::span<float> out_sqdists) {
    const std::size_t g = landmarks.rows();
    const std::size_t d = landmarks.cols();
    std::size_t filled = 0;
    for (std::size_t j = 0; j < g; ++j) {
        const Candidate c{sq_euclidean_unchecked(point.data(), landmarks.row(j).data(), d),
                          static_cast<std::uint32_t>(j)};
        // Indices arrive in ascending order, so a tie never displaces an
        // earlier entry; plain `<` on distance realizes the (dist, index) order.
        if (filled == k && !(c.sqdist < out_sqdists[k - 1]))
            continue;
        std::size_t pos = filled < k ? filled++ : k - 1;
        while (pos > 0 && c.sqdist < out_sqdists[pos - 1]) {
            out_sqdists[pos] = out_sqdists[pos - 1];
            out_indices[pos] = out_indices[pos - 1];
            --pos;
        }
        out_sqdists[pos] = c.sqdist;
        out_indices[pos] = c.index;
    }
}

void bitonic_sort(std::span<Candidate> block) noexcept {
    const std::size_t k = block.size();
    for (std::size_t size = 2; size <= k; size <<= 1) {
        for (std::size_t stride = size >> 1; stride > 0; stride >>= 1) {
            for (std::size_t i = 0; i < k; ++i) {
                const std::size_t j = i ^ stride;
                if (j <= i)
                    continue;
                const bool ascending = (i & size) == 0;
                if (ascending ? closer(block[j], block[i]) : closer(block[i], block[j]))
                    std::swap(block[i], block[j]);
            }
        }
    }
}

void bitonic_merge(std::span<Candidate> block) noexcept {
    const std::size_t k = block.size();
    for (std::size_t stride = k >> 1; stride > 0; stride >>= 1) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i ^ stride;
            if (j > i && closer(block[j], block[i]))
                std::swap(block[i], block[j]);
        }
    }
}

void knn_bitonic_row(std::span<const float> point, MatrixView<const float> landmarks, std::size_t k,
                     std::span<Candidate> scratch, std::span<std::uint32_t> out_indices,
                     std::span<float> out_sqdists) {
    const std::size_t g = landmarks.rows();
    const std::size_t d = landmarks.cols();
    const std::span<Candidate> best = scratch.first(k);
    const std::span<Candidate> work = scratch.subspan(k, k);
    constexpr Candidate sentinel{std::numeric_limits<float>::infinity(), kInvalidIndex};

    auto fill = [&](std::span<Candidate> block, std::size_t start) {
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = start + i;
            block[i] = j < g ? Candidate{sq_euclidean_unchecked(point.data(), landmarks.row(j).data(), d),
                                         static_cast<std::uint32_t>(j)}
                             : sentinel;
        }
    };

    fill(best, 0);
    bitonic_sort(best);

    for (std::size_t start = k; start < g; start += k) {
        fill(work, start);
        // Blocks that cannot improve the current k-th best are dropped unsorted.
        bool improves = false;
        for (const auto &c : work)
            improves |= closer(c, best[k - 1]);
        if (!improves)
            continue;
        bitonic_sort(work);
        // Single comparator stage: elementwise min of ascending `best` and
        // descending `work` keeps the k closest as a bitonic sequence.
        for (std::size_t i = 0; i < k; ++i) {
            const Candidate &other = work[k - 1 - i];
            if (closer(other, best[i]))
                best[i] = other;
        }
        bitonic_merge(best);
    }

    for (std::size_t i = 0; i < k; ++i) {
        out_indices[i] = best[i].index;
        out_sqdists[i] = best[i].sqdist;
    }
}

}  // namespace detail

namespace {

void check_inputs(MatrixView<const float> points, MatrixView<const float> landmarks, std::size_t k) {
    if (points.cols() != landmarks.cols())
        throw Error(ErrorKind::Contract, "shape_mismatch",
                    "points have " + std::to_string(points.cols()) + " dimensions, landmarks " +
                        std::to_string(landmarks.cols()));
    if (k < 1 || k > landmarks.rows())
        throw Error(ErrorKind::Parameter, "invalid_k",
                    "k = " + std::to_string(k) + " must satisfy 1 <= k <= g = " +
                        std::to_string(landmarks.rows()));
    detail::check_finite(points, "points");
    detail::check_finite(landmarks, "landmarks");
}

}  // namespace

NeighborList knn_base(MatrixView<const float> points, MatrixView<const float> landmarks, std::size_t k,
                      std::size_t workers) {
    check_inputs(points, landmarks, k);
    NeighborList out{Matrix<std::uint32_t>(points.rows(), k), Matrix<float>(points.rows(), k)};
    parallel_for_ranges(points.rows(), workers, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            detail::knn_base_row(points.row(i), landmarks, k, out.indices.row(i), out.sqdists.row(i));
    });
    return out;
}

NeighborList knn_bitonic(MatrixView<const float> points, MatrixView<const float> landmarks, std::size_t k,
                         std::size_t workers) {
    check_inputs(points, landmarks, k);
    if (!is_power_of_two(k) || k < 4)
        throw Error(ErrorKind::Parameter, "invalid_k",
                    "bitonic k-NN needs k a power of two >= 4, got " + std::to_string(k));
    NeighborList out{Matrix<std::uint32_t>(points.rows(), k), Matrix<float>(points.rows(), k)};
    parallel_for_ranges(points.rows(), workers, [&](std::size_t b, std::size_t e) {
        std::vector<detail::Candidate> scratch(2 * k);
        for (std::size_t i = b; i < e; ++i)
            detail::knn_bitonic_row(points.row(i), landmarks, k, scratch, out.indices.row(i),
                                    out.sqdists.row(i));
    });
    return out;
}

NeighborList knn(MatrixView<const float> points, MatrixView<const float> landmarks, std::size_t k,
                 KnnBackend backend, std::size_t workers) {
    return backend == KnnBackend::Base ? knn_base(points, landmarks, k, workers)
                                       : knn_bitonic(points, landmarks, k, workers);
}

}  // namespace embedsom
