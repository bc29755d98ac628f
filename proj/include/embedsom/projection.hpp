#pragma once

#include "embedsom/core.hpp"
#include "embedsom/knn.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace embedsom {

/// Accumulated 2x2 normal equations `a * p = c`, i.e. the 2x3 block
/// [a | c] summed over landmark pairs.
struct ProjectionSystem {
    std::array<double, 3> a{};  // a00, a01 (= a10), a11
    Vec2 c{};

    double det() const noexcept { return a[0] * a[2] - a[1] * a[1]; }
    double trace() const noexcept { return a[0] + a[2]; }
};

inline constexpr double kScoreEpsilon = 1e-9;
inline constexpr double kPairEpsilon = 1e-12;
inline constexpr double kDetRelEpsilon = 1e-9;
inline constexpr double kDetAbsEpsilon = 1e-30;

/// Neighbor scores from ascending squared distances (k >= 3). Writes k
/// values into `out`; the last is always 0. Throws `unsorted_distances`.
void scores(std::span<const float> sqdists, std::span<double> out);
std::vector<double> scores(std::span<const float> sqdists);

/// Builds the weighted pairwise-line system for one point.
ProjectionSystem build_projection_system(std::span<const float> point, const LandmarkModel &model,
                                         std::span<const std::uint32_t> neighbors,
                                         std::span<const double> scores);

/// 2D position of one point from its neighbor row and scores. Falls back to
/// the nearest landmark's 2D position when the system is degenerate.
Vec2 project_point(std::span<const float> point, const LandmarkModel &model,
                   std::span<const std::uint32_t> neighbors, std::span<const double> scores);

struct EmbedOptions {
    std::size_t workers = 1;      // 0 = hardware concurrency
    std::size_t block_rows = 4096; // rows per k-NN -> projection block
};

/// Full pipeline k-NN -> scores -> projection for every row of `points`.
/// Writes n x 2 positions into `out`. Each output row depends only on the
/// matching input row, so chunking/worker count never changes results.
void embed_into(MatrixView<const float> points, const LandmarkModel &model, const EmbedParams &params,
                KnnBackend backend, MatrixView<float> out, const EmbedOptions &options = {});

Matrix<float> embed(MatrixView<const float> points, const LandmarkModel &model, const EmbedParams &params,
                    KnnBackend backend, const EmbedOptions &options = {});

/// Projection stage alone over a precomputed neighbor list.
void project_all(MatrixView<const float> points, const LandmarkModel &model, const NeighborList &neighbors,
                 MatrixView<float> out, std::size_t workers = 1);

}  // namespace embedsom
