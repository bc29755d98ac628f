#include "embedsom/som.hpp"

#include "embedsom/knn.hpp"

#include <cmath>

namespace embedsom {

void validate(const SomConfig &cfg) {
    if (!(cfg.sigma > 0) || !std::isfinite(cfg.sigma))
        throw Error(ErrorKind::Parameter, "invalid_sigma", "sigma must be > 0");
    if (!(cfg.alpha >= 0 && cfg.alpha <= 1))
        throw Error(ErrorKind::Parameter, "invalid_alpha", "alpha must be in [0, 1]");
    if (cfg.batch_size < 1)
        throw Error(ErrorKind::Parameter, "invalid_batch", "batch_size must be >= 1");
}

std::size_t bmu(std::span<const float> point, MatrixView<const float> hi) {
    if (hi.rows() == 0)
        throw Error(ErrorKind::Contract, "empty_model", "no landmarks");
    if (point.size() != hi.cols())
        throw Error(ErrorKind::Contract, "shape_mismatch", "point dimension differs from landmarks");
    std::size_t best = 0;
    float best_d = detail::sq_euclidean_unchecked(point.data(), hi.row(0).data(), hi.cols());
    for (std::size_t j = 1; j < hi.rows(); ++j) {
        const float dj = detail::sq_euclidean_unchecked(point.data(), hi.row(j).data(), hi.cols());
        if (dj < best_d) {
            best_d = dj;
            best = j;
        }
    }
    return best;
}

void som_update(std::span<const float> sample, MatrixView<const float> lo, MatrixView<float> hi, double sigma,
                double alpha) {
    const std::size_t b = bmu(sample, hi);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    const double bx = lo(b, 0), by = lo(b, 1);
    for (std::size_t j = 0; j < hi.rows(); ++j) {
        const double dx = lo(j, 0) - bx;
        const double dy = lo(j, 1) - by;
        const auto rate = static_cast<float>(alpha * std::exp(-(dx * dx + dy * dy) * inv));
        if (rate == 0.f)
            continue;
        auto row = hi.row(j);
        for (std::size_t t = 0; t < row.size(); ++t)
            row[t] = std::lerp(row[t], sample[t], rate);
    }
}

void som_tick(MatrixView<const float> data, MatrixView<const float> lo, MatrixView<float> hi, const SomConfig &cfg,
              Rng &rng) {
    validate(cfg);
    if (lo.rows() != hi.rows() || data.cols() != hi.cols())
        throw Error(ErrorKind::Contract, "shape_mismatch", "inconsistent model");
    if (data.rows() == 0 || hi.rows() == 0)
        return;
    for (std::size_t s = 0; s < cfg.batch_size; ++s) {
        const auto idx = static_cast<std::size_t>(rng.below(data.rows()));
        som_update(data.row(idx), lo, hi, cfg.sigma, cfg.alpha);
    }
}

void som_tick(const Dataset &data, LandmarkModel &model, const SomConfig &cfg, Rng &rng) {
    som_tick(data.points().view(), model.lo().view(), model.hi_mut(), cfg, rng);
}

std::vector<float> fit_hi_for_new_landmark(Vec2 pos, const LandmarkModel &model) {
    const std::size_t g = model.size();
    if (g == 0)
        throw Error(ErrorKind::Contract, "empty_model", "cannot fit a landmark into an empty model");
    const std::size_t d = model.dim();
    std::vector<double> dist2(g);
    std::size_t nearest = 0;
    for (std::size_t j = 0; j < g; ++j) {
        const double dx = model.lo()(j, 0) - pos[0];
        const double dy = model.lo()(j, 1) - pos[1];
        dist2[j] = dx * dx + dy * dy;
        if (dist2[j] < dist2[nearest])
            nearest = j;
    }
    if (dist2[nearest] < kFitEpsilon) {
        auto r = model.hi().row(nearest);
        return {r.begin(), r.end()};
    }
    std::vector<double> acc(d, 0.0);
    double wsum = 0;
    for (std::size_t j = 0; j < g; ++j) {
        const double w = 1.0 / (dist2[j] + kFitEpsilon);
        wsum += w;
        auto r = model.hi().row(j);
        for (std::size_t t = 0; t < d; ++t)
            acc[t] += w * r[t];
    }
    std::vector<float> out(d);
    for (std::size_t t = 0; t < d; ++t)
        out[t] = static_cast<float>(acc[t] / wsum);
    return out;
}

double quantization_error(MatrixView<const float> data, MatrixView<const float> hi) {
    if (data.rows() == 0)
        return 0.0;
    double acc = 0;
    for (std::size_t i = 0; i < data.rows(); ++i) {
        float best = std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j < hi.rows(); ++j)
            best = std::min(best, detail::sq_euclidean_unchecked(data.row(i).data(), hi.row(j).data(), hi.cols()));
        acc += best;
    }
    return acc / static_cast<double>(data.rows());
}

}  // namespace embedsom
