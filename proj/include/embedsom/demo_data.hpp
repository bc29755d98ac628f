#pragma once

#include "embedsom/core.hpp"

#include <cstdint>
#include <vector>

namespace embedsom::demo {

struct LabeledData {
    Dataset data;
    std::vector<std::uint32_t> labels;  // generator cluster per row (0 when not meaningful)
};

/// `clusters` isotropic Gaussians with centers drawn uniformly in
/// [-center_spread, center_spread]^d; row i belongs to cluster i % clusters.
LabeledData gaussians(std::size_t clusters, std::size_t n, std::size_t d, std::uint64_t seed, double sd = 1.0,
                      double center_spread = 10.0);

/// 3D S-curve swept along y: t ~ U(-3pi/2, 3pi/2), x = sin t,
/// z = sign(t) (cos t - 1), y ~ U(0, 2), plus N(0, noise) per coordinate.
LabeledData extruded_s(std::size_t n, std::uint64_t seed, double noise = 0.0);

/// Uniform [0, 1)^d.
Dataset uniform(std::size_t n, std::size_t d, std::uint64_t seed);

}  // namespace embedsom::demo
