#pragma once

#include "embedsom/core.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace embedsom {

inline constexpr const char *kBenchHeader = "backend,n,d,g,k,stage,mean_ns_per_point,rel_sd,unstable";
inline constexpr double kBenchUnstableRelSd = 0.05;

enum class BenchStage { Knn, Projection, Fused };
const char *to_string(BenchStage stage) noexcept;
BenchStage parse_stage(std::string_view name);

struct BenchGrid {
    std::vector<KnnBackend> backends{KnnBackend::Base, KnnBackend::Bitonic};
    std::vector<std::size_t> n{std::size_t{1} << 20};
    std::vector<std::size_t> d{4, 16, 64};
    std::vector<std::size_t> g{64, 256, 1024};
    std::vector<std::size_t> k{8, 16, 64};
    std::vector<BenchStage> stages{BenchStage::Knn, BenchStage::Projection, BenchStage::Fused};
    std::size_t warmup = 1;
    std::size_t reps = 10;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
};

struct BenchRow {
    KnnBackend backend{};
    std::size_t n = 0, d = 0, g = 0, k = 0;
    BenchStage stage{};
    double mean_ns_per_point = 0;
    double rel_sd = 0;
    bool unstable = false;
};

struct SampleStats {
    double mean = 0;
    double rel_sd = 0;  // sample sd / mean
};
SampleStats summarize(const std::vector<double> &samples);

void validate(const BenchGrid &grid);

/// Runs every valid cell (k <= g; bitonic needs a power-of-two k >= 4).
/// Before timing each (n, d, g, k) the two backends' neighbor lists are
/// compared and a mismatch throws `backend_mismatch`. Rows are reported
/// through `on_row` as they complete and also returned.
std::vector<BenchRow> run_bench(const BenchGrid &grid, const std::function<void(const BenchRow &)> &on_row = {});

std::string format_bench_row(const BenchRow &row);

}  // namespace embedsom
