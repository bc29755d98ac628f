#include "embedsom/demo_data.hpp"

#include "embedsom/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace embedsom::demo {

LabeledData gaussians(std::size_t clusters, std::size_t n, std::size_t d, std::uint64_t seed, double sd,
                      double center_spread) {
    if (clusters == 0 || n == 0 || d == 0)
        throw Error(ErrorKind::Parameter, "invalid_generator", "gaussians need clusters, n, d >= 1");
    Rng rng(seed, 1);
    Matrix<double> centers(clusters, d);
    for (auto &c : centers.data())
        c = rng.uniform(-center_spread, center_spread);
    Matrix<float> pts(n, d);
    std::vector<std::uint32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % clusters;
        labels[i] = static_cast<std::uint32_t>(c);
        for (std::size_t j = 0; j < d; ++j)
            pts(i, j) = static_cast<float>(centers(c, j) + (sd > 0 ? sd * rng.normal() : 0.0));
    }
    return {Dataset(std::move(pts)), std::move(labels)};
}

LabeledData extruded_s(std::size_t n, std::uint64_t seed, double noise) {
    if (n == 0)
        throw Error(ErrorKind::Parameter, "invalid_generator", "extruded_s needs n >= 1");
    Rng rng(seed, 2);
    Matrix<float> pts(n, 3);
    std::vector<std::uint32_t> labels(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = rng.uniform(-1.5 * std::numbers::pi, 1.5 * std::numbers::pi);
        const double y = rng.uniform(0.0, 2.0);
        const double sign = t < 0 ? -1.0 : 1.0;
        double p[3] = {std::sin(t), y, sign * (std::cos(t) - 1.0)};
        if (noise > 0)
            for (double &v : p)
                v += noise * rng.normal();
        for (std::size_t j = 0; j < 3; ++j)
            pts(i, j) = static_cast<float>(p[j]);
        labels[i] = t < 0 ? 0 : 1;
    }
    return {Dataset(std::move(pts), {"x", "y", "z"}), std::move(labels)};
}

Dataset uniform(std::size_t n, std::size_t d, std::uint64_t seed) {
    if (n == 0 || d == 0)
        throw Error(ErrorKind::Parameter, "invalid_generator", "uniform needs n, d >= 1");
    Rng rng(seed, 3);
    Matrix<float> pts(n, d);
    // Rounding to float can reach 1.0; keep the half-open range.
    for (auto &v : pts.data())
        v = std::min(static_cast<float>(rng.uniform()), std::nextafter(1.0f, 0.0f));
    return Dataset(std::move(pts));
}

}  // namespace embedsom::demo
