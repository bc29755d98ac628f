#include "embedsom/bench.hpp"

#include "embedsom/demo_data.hpp"
#include "embedsom/knn.hpp"
#include "embedsom/projection.hpp"
#include "embedsom/rng.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace embedsom {

const char *to_string(BenchStage stage) noexcept {
    switch (stage) {
    case BenchStage::Knn: return "knn";
    case BenchStage::Projection: return "projection";
    case BenchStage::Fused: return "fused";
    }
    return "?";
}

BenchStage parse_stage(std::string_view name) {
    if (name == "knn") return BenchStage::Knn;
    if (name == "projection") return BenchStage::Projection;
    if (name == "fused") return BenchStage::Fused;
    throw Error(ErrorKind::Parameter, "unknown_stage", "unknown bench stage '" + std::string(name) + "'");
}

SampleStats summarize(const std::vector<double> &samples) {
    SampleStats s;
    if (samples.empty())
        return s;
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
    if (samples.size() > 1 && s.mean > 0) {
        double ss = 0;
        for (double v : samples)
            ss += (v - s.mean) * (v - s.mean);
        s.rel_sd = std::sqrt(ss / static_cast<double>(samples.size() - 1)) / s.mean;
    }
    return s;
}

void validate(const BenchGrid &grid) {
    auto nonempty = [](const auto &v, const char *what) {
        if (v.empty())
            throw Error(ErrorKind::Parameter, "invalid_grid", std::string("bench grid has no ") + what + " values");
    };
    nonempty(grid.backends, "backend");
    nonempty(grid.n, "n");
    nonempty(grid.d, "d");
    nonempty(grid.g, "g");
    nonempty(grid.k, "k");
    nonempty(grid.stages, "stage");
    auto positive = [](const std::vector<std::size_t> &v, const char *what) {
        for (auto x : v)
            if (x == 0)
                throw Error(ErrorKind::Parameter, "invalid_grid", std::string(what) + " must be positive");
    };
    positive(grid.n, "n");
    positive(grid.d, "d");
    positive(grid.g, "g");
    for (auto k : grid.k)
        if (k < 3)
            throw Error(ErrorKind::Parameter, "invalid_grid", "k must be at least 3");
    if (grid.reps == 0)
        throw Error(ErrorKind::Parameter, "invalid_grid", "reps must be positive");
}

namespace {

bool backend_accepts(KnnBackend b, std::size_t k, std::size_t g) {
    if (k > g)
        return false;
    return b == KnnBackend::Base || (is_power_of_two(k) && k >= 4 && k <= 64);
}

template <typename F>
double time_ns(F &&f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::nano>(t1 - t0).count();
}

}  // namespace

std::vector<BenchRow> run_bench(const BenchGrid &grid, const std::function<void(const BenchRow &)> &on_row) {
    validate(grid);
    std::vector<BenchRow> rows;
    std::uint64_t cell = 0;
    for (auto n : grid.n)
        for (auto d : grid.d)
            for (auto g : grid.g) {
                const std::uint64_t cell_seed = mix64(grid.seed ^ mix64(++cell));
                const Dataset points = demo::uniform(n, d, cell_seed);
                const Dataset hi = demo::uniform(g, d, mix64(cell_seed + 1));
                const Dataset lo = demo::uniform(g, 2, mix64(cell_seed + 2));
                const LandmarkModel model(hi.points(), lo.points());
                for (auto k : grid.k) {
                    if (k > g)
                        continue;
                    if (backend_accepts(KnnBackend::Bitonic, k, g)) {
                        const auto a = knn_base(points.points(), model.hi(), k, grid.workers);
                        const auto b = knn_bitonic(points.points(), model.hi(), k, grid.workers);
                        if (!(a.indices == b.indices) || !(a.sqdists == b.sqdists))
                            throw Error(ErrorKind::Contract, "backend_mismatch",
                                        "base and bitonic neighbor lists differ at n=" + std::to_string(n) +
                                            " d=" + std::to_string(d) + " g=" + std::to_string(g) +
                                            " k=" + std::to_string(k));
                    }
                    for (auto backend : grid.backends) {
                        if (!backend_accepts(backend, k, g))
                            continue;
                        const EmbedParams params{k};
                        const NeighborList neighbors = knn(points.points(), model.hi(), k, backend, grid.workers);
                        Matrix<float> out(n, 2);
                        for (auto stage : grid.stages) {
                            auto run = [&] {
                                switch (stage) {
                                case BenchStage::Knn: {
                                    auto nl = knn(points.points(), model.hi(), k, backend, grid.workers);
                                    (void)nl;
                                    break;
                                }
                                case BenchStage::Projection:
                                    project_all(points.points(), model, neighbors, out.view(), grid.workers);
                                    break;
                                case BenchStage::Fused:
                                    embed_into(points.points(), model, params, backend, out.view(),
                                               EmbedOptions{grid.workers, 4096});
                                    break;
                                }
                            };
                            for (std::size_t w = 0; w < grid.warmup; ++w)
                                run();
                            std::vector<double> samples;
                            for (std::size_t r = 0; r < grid.reps; ++r)
                                samples.push_back(time_ns(run) / static_cast<double>(n));
                            const auto st = summarize(samples);
                            BenchRow row{backend, n, d, g, k, stage, st.mean, st.rel_sd, st.rel_sd > kBenchUnstableRelSd};
                            rows.push_back(row);
                            if (on_row)
                                on_row(row);
                        }
                    }
                }
            }
    return rows;
}

std::string format_bench_row(const BenchRow &row) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%s,%.3f,%.5f,%d", to_string(row.backend), row.n, row.d, row.g,
                  row.k, to_string(row.stage), row.mean_ns_per_point, row.rel_sd, row.unstable ? 1 : 0);
    return buf;
}

}  // namespace embedsom
