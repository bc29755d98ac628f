#pragma once

#include "embedsom/core.hpp"
#include "embedsom/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace embedsom {

struct Edge {
    std::uint32_t i;  // i < j
    std::uint32_t j;
    double rest_length;
    bool operator==(const Edge &) const = default;
};

/// Undirected landmark neighborhood graph, sorted by (i, j).
struct EdgeSet {
    std::vector<Edge> edges;
    std::size_t size() const noexcept { return edges.size(); }
    bool operator==(const EdgeSet &) const = default;
};

struct LayoutParams {
    double stiffness = 1.0;
    double repulsion = 0.05;
    double damping = 0.9;  // in (0, 1)
    double dt = 0.05;
};

struct LayoutState {
    Matrix<double> velocities;  // g x 2
    LayoutParams params;
};

void validate(const LayoutParams &params);

struct KmeansConfig {
    double alpha = 0.05;  // in (0, 1]
    std::size_t batch_size = 256;
};

void validate(const KmeansConfig &cfg);

/// Online k-means: each drawn sample moves only its nearest landmark.
void kmeans_tick(MatrixView<const float> data, MatrixView<float> hi, const KmeansConfig &cfg, Rng &rng);
void kmeans_tick(const Dataset &data, LandmarkModel &model, const KmeansConfig &cfg, Rng &rng);

/// Symmetrized k_g-NN graph over the landmarks; rest length = scale * distance.
/// Throws `invalid_k` unless 1 <= k_g < g.
EdgeSet build_knn_graph(MatrixView<const float> hi, std::size_t k_graph, double scale);

/// Scale making the mean rest length of the graph equal to `target`.
double rest_scale_for_mean(MatrixView<const float> hi, std::size_t k_graph, double target = 1.0);

inline constexpr double kRepulsionSoftening = 1e-3;

/// Spring + repulsion forces (g x 2) for the current layout.
Matrix<double> layout_forces(MatrixView<const float> lo, const EdgeSet &edges, const LayoutParams &params);

/// One semi-implicit Euler step. Pinned landmarks keep their position and
/// get zero velocity. `pinned` is a per-landmark mask (may be empty).
void layout_tick(MatrixView<float> lo, const EdgeSet &edges, LayoutState &state,
                 std::span<const std::uint8_t> pinned);

/// Sum over edges of (|lo_i - lo_j| - rest)^2.
double edge_stress(MatrixView<const float> lo, const EdgeSet &edges);

inline constexpr double kDuplicateLoJitter = 1e-2;
inline constexpr double kDuplicateHiJitter = 1e-4;

struct DuplicateResult {
    LandmarkId id;
    std::vector<float> hi_offset;  // as applied to the copy
    Vec2 lo_offset;
};

/// Appends a jittered copy of landmark `id`. `dim_ranges` (max - min per
/// dimension) scales the high-dimensional jitter. Throws `unknown_landmark`.
DuplicateResult duplicate_landmark(LandmarkModel &model, LandmarkId id, std::span<const double> dim_ranges,
                                   Rng &rng);

/// Removes landmark `id`; rejected with `landmark_floor` when fewer than
/// `min_landmarks` would remain. Throws `unknown_landmark`.
void remove_landmark(LandmarkModel &model, LandmarkId id, std::size_t min_landmarks);

}  // namespace embedsom
