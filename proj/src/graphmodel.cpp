#include "embedsom/graphmodel.hpp"

#include "embedsom/knn.hpp"
#include "embedsom/som.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace embedsom {

void validate(const LayoutParams &p) {
    if (!(p.damping > 0 && p.damping < 1))
        throw Error(ErrorKind::Parameter, "invalid_damping", "damping must be in (0, 1)");
    if (!(p.dt > 0))
        throw Error(ErrorKind::Parameter, "invalid_dt", "dt must be > 0");
    if (!(p.stiffness >= 0) || !(p.repulsion >= 0))
        throw Error(ErrorKind::Parameter, "invalid_force", "stiffness and repulsion must be >= 0");
}

void validate(const KmeansConfig &cfg) {
    if (!(cfg.alpha > 0 && cfg.alpha <= 1))
        throw Error(ErrorKind::Parameter, "invalid_alpha", "alpha_km must be in (0, 1]");
    if (cfg.batch_size < 1)
        throw Error(ErrorKind::Parameter, "invalid_batch", "batch_size must be >= 1");
}

void kmeans_tick(MatrixView<const float> data, MatrixView<float> hi, const KmeansConfig &cfg, Rng &rng) {
    validate(cfg);
    if (data.cols() != hi.cols())
        throw Error(ErrorKind::Contract, "shape_mismatch", "dataset and landmark dimensions differ");
    if (data.rows() == 0 || hi.rows() == 0)
        return;
    const auto rate = static_cast<float>(cfg.alpha);
    for (std::size_t s = 0; s < cfg.batch_size; ++s) {
        const auto sample = data.row(static_cast<std::size_t>(rng.below(data.rows())));
        auto row = hi.row(bmu(sample, hi));
        for (std::size_t t = 0; t < row.size(); ++t)
            row[t] = std::lerp(row[t], sample[t], rate);
    }
}

void kmeans_tick(const Dataset &data, LandmarkModel &model, const KmeansConfig &cfg, Rng &rng) {
    kmeans_tick(data.points().view(), model.hi_mut(), cfg, rng);
}

namespace {

struct Neighbor {
    float sqdist;
    std::uint32_t index;
};

// k_graph nearest other landmarks of landmark i, ordered by (distance, index).
std::vector<Neighbor> nearest_others(MatrixView<const float> hi, std::size_t i, std::size_t k_graph) {
    std::vector<Neighbor> best;
    best.reserve(k_graph + 1);
    for (std::size_t j = 0; j < hi.rows(); ++j) {
        if (j == i)
            continue;
        const Neighbor c{detail::sq_euclidean_unchecked(hi.row(i).data(), hi.row(j).data(), hi.cols()),
                         static_cast<std::uint32_t>(j)};
        if (best.size() == k_graph && !(c.sqdist < best.back().sqdist))
            continue;
        auto pos = std::upper_bound(best.begin(), best.end(), c.sqdist,
                                    [](float v, const Neighbor &n) { return v < n.sqdist; });
        best.insert(pos, c);
        if (best.size() > k_graph)
            best.pop_back();
    }
    return best;
}

void check_graph_k(std::size_t g, std::size_t k_graph) {
    if (k_graph < 1 || k_graph >= g)
        throw Error(ErrorKind::Parameter, "invalid_k",
                    "graph k = " + std::to_string(k_graph) + " must satisfy 1 <= k < g = " + std::to_string(g));
}

}  // namespace

EdgeSet build_knn_graph(MatrixView<const float> hi, std::size_t k_graph, double scale) {
    const std::size_t g = hi.rows();
    check_graph_k(g, k_graph);
    EdgeSet out;
    for (std::size_t i = 0; i < g; ++i) {
        for (const auto &n : nearest_others(hi, i, k_graph)) {
            const auto a = static_cast<std::uint32_t>(std::min<std::size_t>(i, n.index));
            const auto b = static_cast<std::uint32_t>(std::max<std::size_t>(i, n.index));
            out.edges.push_back({a, b, scale * std::sqrt(static_cast<double>(n.sqdist))});
        }
    }
    std::sort(out.edges.begin(), out.edges.end(),
              [](const Edge &x, const Edge &y) { return x.i < y.i || (x.i == y.i && x.j < y.j); });
    out.edges.erase(std::unique(out.edges.begin(), out.edges.end(),
                                [](const Edge &x, const Edge &y) { return x.i == y.i && x.j == y.j; }),
                    out.edges.end());
    return out;
}

double rest_scale_for_mean(MatrixView<const float> hi, std::size_t k_graph, double target) {
    const EdgeSet raw = build_knn_graph(hi, k_graph, 1.0);
    double mean = 0;
    for (const auto &e : raw.edges)
        mean += e.rest_length;
    mean /= static_cast<double>(std::max<std::size_t>(1, raw.size()));
    return mean > 0 ? target / mean : 1.0;
}

Matrix<double> layout_forces(MatrixView<const float> lo, const EdgeSet &edges, const LayoutParams &params) {
    const std::size_t g = lo.rows();
    Matrix<double> f(g, 2);
    for (const auto &e : edges.edges) {
        const double dx = static_cast<double>(lo(e.j, 0)) - lo(e.i, 0);
        const double dy = static_cast<double>(lo(e.j, 1)) - lo(e.i, 1);
        const double dist = std::sqrt(dx * dx + dy * dy);
        if (dist <= 0)
            continue;
        const double m = params.stiffness * (dist - e.rest_length) / dist;
        f(e.i, 0) += m * dx;
        f(e.i, 1) += m * dy;
        f(e.j, 0) -= m * dx;
        f(e.j, 1) -= m * dy;
    }
    if (params.repulsion > 0) {
        for (std::size_t i = 0; i < g; ++i) {
            for (std::size_t j = i + 1; j < g; ++j) {
                const double dx = static_cast<double>(lo(j, 0)) - lo(i, 0);
                const double dy = static_cast<double>(lo(j, 1)) - lo(i, 1);
                const double r2 = dx * dx + dy * dy + kRepulsionSoftening;
                const double m = params.repulsion / (r2 * std::sqrt(r2));
                f(i, 0) -= m * dx;
                f(i, 1) -= m * dy;
                f(j, 0) += m * dx;
                f(j, 1) += m * dy;
            }
        }
    }
    return f;
}

void layout_tick(MatrixView<float> lo, const EdgeSet &edges, LayoutState &state,
                 std::span<const std::uint8_t> pinned) {
    validate(state.params);
    const std::size_t g = lo.rows();
    if (state.velocities.rows() != g || state.velocities.cols() != 2)
        state.velocities = Matrix<double>(g, 2);
    if (!pinned.empty() && pinned.size() != g)
        throw Error(ErrorKind::Contract, "shape_mismatch", "pinned mask size differs from landmark count");
    for (const auto &e : edges.edges)
        if (e.i >= g || e.j >= g)
            throw Error(ErrorKind::Contract, "shape_mismatch", "edge references a missing landmark");

    const Matrix<double> f = layout_forces(lo, edges, state.params);
    const double damping = state.params.damping;
    const double dt = state.params.dt;
    for (std::size_t i = 0; i < g; ++i) {
        auto v = state.velocities.row(i);
        if (!pinned.empty() && pinned[i]) {
            v[0] = v[1] = 0;
            continue;
        }
        for (std::size_t c = 0; c < 2; ++c) {
            v[c] = damping * (v[c] + dt * f(i, c));
            lo(i, c) = static_cast<float>(lo(i, c) + dt * v[c]);
        }
    }
}

double edge_stress(MatrixView<const float> lo, const EdgeSet &edges) {
    double s = 0;
    for (const auto &e : edges.edges) {
        const double dx = static_cast<double>(lo(e.j, 0)) - lo(e.i, 0);
        const double dy = static_cast<double>(lo(e.j, 1)) - lo(e.i, 1);
        const double r = std::sqrt(dx * dx + dy * dy) - e.rest_length;
        s += r * r;
    }
    return s;
}

DuplicateResult duplicate_landmark(LandmarkModel &model, LandmarkId id, std::span<const double> dim_ranges,
                                   Rng &rng) {
    const std::size_t src = model.require_index(id);
    const std::size_t d = model.dim();
    if (dim_ranges.size() != d)
        throw Error(ErrorKind::Contract, "shape_mismatch", "dimension range count differs from d");

    DuplicateResult res;
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    res.lo_offset = {kDuplicateLoJitter * std::cos(angle), kDuplicateLoJitter * std::sin(angle)};

    std::vector<float> hi_row(model.hi().row(src).begin(), model.hi().row(src).end());
    res.hi_offset.resize(d);
    for (std::size_t t = 0; t < d; ++t) {
        const double sign = (rng.next_u64() >> 63) ? 1.0 : -1.0;
        res.hi_offset[t] = static_cast<float>(sign * kDuplicateHiJitter * dim_ranges[t]);
        hi_row[t] += res.hi_offset[t];
    }
    const Vec2 lo_pos{model.lo()(src, 0) + res.lo_offset[0], model.lo()(src, 1) + res.lo_offset[1]};
    res.id = model.append(hi_row, lo_pos);
    return res;
}

void remove_landmark(LandmarkModel &model, LandmarkId id, std::size_t min_landmarks) {
    const std::size_t idx = model.require_index(id);
    if (model.size() - 1 < min_landmarks)
        throw Error(ErrorKind::Parameter, "landmark_floor",
                    "removing landmark would leave " + std::to_string(model.size() - 1) +
                        " landmarks, the projection needs at least " + std::to_string(min_landmarks));
    model.erase(idx);
}

}  // namespace embedsom
