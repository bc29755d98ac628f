#include "embedsom/projection.hpp"

#include "embedsom/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace embedsom {

void scores(std::span<const float> sqdists, std::span<double> out) {
    const std::size_t k = sqdists.size();
    if (k < 3)
        throw Error(ErrorKind::Contract, "invalid_k", "scores need at least 3 neighbors");
    if (out.size() != k)
        throw Error(ErrorKind::Contract, "shape_mismatch", "score buffer size mismatch");
    for (std::size_t i = 0; i < k; ++i) {
        if (!(sqdists[i] >= 0.f) || (i > 0 && sqdists[i] < sqdists[i - 1]))
            throw Error(ErrorKind::Contract, "unsorted_distances",
                        "neighbor distances must be non-negative and ascending (position " + std::to_string(i) +
                            ")");
    }

    double sigma = 0;
    for (float sq : sqdists)
        sigma += std::sqrt(static_cast<double>(sq));
    sigma /= static_cast<double>(k);

    auto uniform = [&] {
        std::fill(out.begin(), out.end() - 1, 1.0);
        out[k - 1] = 0.0;
    };
    if (sigma < kScoreEpsilon) {
        uniform();
        return;
    }
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const double floor = std::exp(-static_cast<double>(sqdists[k - 1]) * inv);
    for (std::size_t i = 0; i + 1 < k; ++i)
        out[i] = std::max(0.0, std::exp(-static_cast<double>(sqdists[i]) * inv) - floor);
    out[k - 1] = 0.0;
    if (out[0] < kScoreEpsilon)
        uniform();
}

std::vector<double> scores(std::span<const float> sqdists) {
    std::vector<double> out(sqdists.size());
    scores(sqdists, out);
    return out;
}

namespace {

// Per-thread scratch for the differences X - L_u of the current point.
struct ProjectionScratch {
    std::vector<double> diffs;
};

ProjectionSystem accumulate(std::span<const float> point, const LandmarkModel &model,
                            std::span<const std::uint32_t> neighbors, std::span<const double> s,
                            ProjectionScratch &scratch) {
    const std::size_t k = neighbors.size();
    const std::size_t d = point.size();
    const auto hi = model.hi().view();
    const auto lo = model.lo().view();

    scratch.diffs.resize(k * d);
    for (std::size_t u = 0; u < k; ++u) {
        if (s[u] <= 0.0)
            continue;
        auto lu = hi.row(neighbors[u]);
        double *y = scratch.diffs.data() + u * d;
        for (std::size_t t = 0; t < d; ++t)
            y[t] = static_cast<double>(point[t]) - static_cast<double>(lu[t]);
    }

    ProjectionSystem sys;
    for (std::size_t u = 0; u < k; ++u) {
        if (s[u] <= 0.0)
            continue;
        const double *yu = scratch.diffs.data() + u * d;
        const double lux = lo(neighbors[u], 0);
        const double luy = lo(neighbors[u], 1);
        for (std::size_t v = u + 1; v < k; ++v) {
            const double w = s[u] * s[v];
            if (w <= 0.0)
                continue;
            const double *yv = scratch.diffs.data() + v * d;
            // L_v - L_u = y_u - y_v
            double num = 0, den = 0;
            for (std::size_t t = 0; t < d; ++t) {
                const double e = yu[t] - yv[t];
                num += yu[t] * e;
                den += e * e;
            }
            const double gx = lo(neighbors[v], 0) - lux;
            const double gy = lo(neighbors[v], 1) - luy;
            const double glen = gx * gx + gy * gy;
            if (den < kPairEpsilon || glen < kPairEpsilon)
                continue;
            const double coord = num / den;
            const double hx = gx / glen;
            const double hy = gy / glen;
            const double rhs = coord + hx * lux + hy * luy;
            sys.a[0] += w * hx * hx;
            sys.a[1] += w * hx * hy;
            sys.a[2] += w * hy * hy;
            sys.c[0] += w * rhs * hx;
            sys.c[1] += w * rhs * hy;
        }
    }
    return sys;
}

Vec2 solve(const ProjectionSystem &sys, const LandmarkModel &model, std::uint32_t nearest) {
    const double det = sys.det();
    const double tr = sys.trace();
    if (!(det >= kDetRelEpsilon * tr * tr + kDetAbsEpsilon))
        return {model.lo()(nearest, 0), model.lo()(nearest, 1)};
    // Cramer's rule
    return {(sys.c[0] * sys.a[2] - sys.a[1] * sys.c[1]) / det, (sys.a[0] * sys.c[1] - sys.a[1] * sys.c[0]) / det};
}

void check_row(std::span<const float> point, const LandmarkModel &model, std::span<const std::uint32_t> neighbors,
               std::span<const double> s) {
    if (point.size() != model.dim())
        throw Error(ErrorKind::Contract, "shape_mismatch", "point dimension differs from landmarks");
    if (neighbors.size() < 3 || neighbors.size() != s.size())
        throw Error(ErrorKind::Contract, "invalid_k", "need k >= 3 neighbors with matching scores");
    for (auto idx : neighbors)
        if (idx >= model.size())
            throw Error(ErrorKind::Contract, "unknown_landmark", "neighbor index out of range");
}

}  // namespace

ProjectionSystem build_projection_system(std::span<const float> point, const LandmarkModel &model,
                                         std::span<const std::uint32_t> neighbors, std::span<const double> s) {
    check_row(point, model, neighbors, s);
    ProjectionScratch scratch;
    return accumulate(point, model, neighbors, s, scratch);
}

Vec2 project_point(std::span<const float> point, const LandmarkModel &model, std::span<const std::uint32_t> neighbors,
                   std::span<const double> s) {
    check_row(point, model, neighbors, s);
    ProjectionScratch scratch;
    return solve(accumulate(point, model, neighbors, s, scratch), model, neighbors[0]);
}

void project_all(MatrixView<const float> points, const LandmarkModel &model, const NeighborList &neighbors,
                 MatrixView<float> out, std::size_t workers) {
    const std::size_t k = neighbors.k();
    if (neighbors.size() != points.rows() || out.rows() != points.rows() || out.cols() != 2)
        throw Error(ErrorKind::Contract, "shape_mismatch", "projection buffers disagree on n");
    if (points.rows() > 0)
        check_row(points.row(0), model, neighbors.indices.row(0), std::vector<double>(k));
    parallel_for_ranges(points.rows(), workers, [&](std::size_t b, std::size_t e) {
        ProjectionScratch scratch;
        std::vector<double> s(k);
        for (std::size_t i = b; i < e; ++i) {
            scores(neighbors.sqdists.row(i), s);
            const auto nb = neighbors.indices.row(i);
            const Vec2 p = solve(accumulate(points.row(i), model, nb, s, scratch), model, nb[0]);
            out(i, 0) = static_cast<float>(p[0]);
            out(i, 1) = static_cast<float>(p[1]);
        }
    });
}

void embed_into(MatrixView<const float> points, const LandmarkModel &model, const EmbedParams &params,
                KnnBackend backend, MatrixView<float> out, const EmbedOptions &options) {
    validate_embed_params(params, model.size(), backend);
    if (points.cols() != model.dim())
        throw Error(ErrorKind::Contract, "shape_mismatch", "dataset and landmark dimensions differ");
    if (out.rows() != points.rows() || out.cols() != 2)
        throw Error(ErrorKind::Contract, "shape_mismatch", "output must be n x 2");
    detail::check_finite(points, "points");
    detail::check_finite(model.hi().view(), "landmarks");
    detail::check_finite(model.lo().view(), "2D landmarks");

    const std::size_t k = params.k;
    const std::size_t block = std::max<std::size_t>(1, options.block_rows);
    const auto hi = model.hi().view();

    parallel_for_ranges(points.rows(), options.workers, [&](std::size_t b, std::size_t e) {
        std::vector<detail::Candidate> candidates(2 * k);
        Matrix<std::uint32_t> idx(block, k);
        Matrix<float> dist(block, k);
        std::vector<double> s(k);
        ProjectionScratch scratch;
        for (std::size_t start = b; start < e; start += block) {
            const std::size_t stop = std::min(e, start + block);
            for (std::size_t i = start; i < stop; ++i) {
                if (backend == KnnBackend::Bitonic)
                    detail::knn_bitonic_row(points.row(i), hi, k, candidates, idx.row(i - start), dist.row(i - start));
                else
                    detail::knn_base_row(points.row(i), hi, k, idx.row(i - start), dist.row(i - start));
            }
            for (std::size_t i = start; i < stop; ++i) {
                scores(dist.row(i - start), s);
                const auto nb = idx.row(i - start);
                const Vec2 p = solve(accumulate(points.row(i), model, nb, s, scratch), model, nb[0]);
                out(i, 0) = static_cast<float>(p[0]);
                out(i, 1) = static_cast<float>(p[1]);
            }
        }
    });
}

Matrix<float> embed(MatrixView<const float> points, const LandmarkModel &model, const EmbedParams &params,
                    KnnBackend backend, const EmbedOptions &options) {
    Matrix<float> out(points.rows(), 2);
    embed_into(points, model, params, backend, out.view(), options);
    return out;
}

}  // namespace embedsom
