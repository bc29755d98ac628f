#pragma once

#include "embedsom/core.hpp"
#include "embedsom/rng.hpp"

#include <span>
#include <vector>

namespace embedsom {

struct SomConfig {
    double sigma = 1.0;  // neighborhood radius in 2D layout units
    double alpha = 0.1;  // learning rate
    std::size_t batch_size = 256;
};

/// Throws `invalid_sigma` / `invalid_alpha` / `invalid_batch`.
void validate(const SomConfig &cfg);

/// Index of the landmark nearest to `point` (ties to the lower index).
std::size_t bmu(std::span<const float> point, MatrixView<const float> hi);

/// One online SOM tick: `batch_size` samples drawn from `rng`, each pulling
/// every landmark toward itself with weight alpha * exp(-|lo_j - lo_bmu|^2 / 2 sigma^2).
/// `lo` is read only.
void som_tick(MatrixView<const float> data, MatrixView<const float> lo, MatrixView<float> hi, const SomConfig &cfg,
              Rng &rng);
void som_tick(const Dataset &data, LandmarkModel &model, const SomConfig &cfg, Rng &rng);

/// Applies a single sample (the inner step of `som_tick`).
void som_update(std::span<const float> sample, MatrixView<const float> lo, MatrixView<float> hi, double sigma,
                double alpha);

inline constexpr double kFitEpsilon = 1e-6;

/// Initial high-dimensional position for a landmark placed at `pos` in 2D:
/// inverse-squared-distance weighted mean of existing landmarks, or the
/// coincident landmark's row. Throws `empty_model`.
std::vector<float> fit_hi_for_new_landmark(Vec2 pos, const LandmarkModel &model);

/// Mean squared distance from each row of `data` to its nearest landmark.
double quantization_error(MatrixView<const float> data, MatrixView<const float> hi);

}  // namespace embedsom
