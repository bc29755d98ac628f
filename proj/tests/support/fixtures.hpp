#pragma once

// Shared fixtures: a dataset on disk and a scripted interactive session.

#include "embedsom/demo_data.hpp"
#include "embedsom/io.hpp"
#include "embedsom/script.hpp"

#include <filesystem>
#include <string>

namespace fixture {

inline std::filesystem::path scratch_dir(const std::string &name) {
    auto dir = std::filesystem::temp_directory_path() / ("embedsom_" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::filesystem::path write_gaussians(const std::filesystem::path &dir, std::size_t n = 3000) {
    const auto path = dir / "gauss.tsv";
    embedsom::write_file(path, embedsom::write_delimited(embedsom::demo::gaussians(3, n, 6, 5).data, '\t'));
    return path;
}

/// 50 commands spread over 60 ticks covering every command kind.
/// Landmark ids follow the model's deterministic id sequence (0..255 at init).
inline embedsom::Script fifty_command_script(const std::filesystem::path &data, std::uint64_t seed = 42) {
    using namespace embedsom;
    Script s;
    s.config.seed = seed;
    s.config.chunk_size = 1000;
    std::uint64_t tick = 0;
    auto add = [&](Command c) { s.entries.push_back({tick, std::move(c)}); };
    add(cmd::LoadDataset{data.string(), DataFormat::Tsv, TransformKind::ZScore});
    tick = 1;
    for (int i = 0; i < 10; ++i, tick += 1)
        add(cmd::MoveLandmark{LandmarkId{static_cast<std::uint64_t>(i * 7)}, 0.5 * i, 15.0 - i, i % 3 != 0});
    add(cmd::SetParams{.sigma = 0.5, .alpha = 0.05});
    add(cmd::SetParams{.k = 20});
    for (int i = 0; i < 5; ++i, ++tick)
        add(cmd::AddLandmark{2.0 + i, 3.0 * i});
    add(cmd::SetMode{Mode::Graph});
    add(cmd::SetParams{.alpha_km = 0.1, .k_graph = 4});
    for (int i = 0; i < 8; ++i, tick += 2)
        add(cmd::DuplicateLandmark{LandmarkId{static_cast<std::uint64_t>(3 + 11 * i)}});
    for (int i = 0; i < 6; ++i, ++tick)
        add(cmd::RemoveLandmark{LandmarkId{static_cast<std::uint64_t>(100 + 5 * i)}});
    add(cmd::SetParams{.paused = true});
    for (int i = 0; i < 5; ++i, ++tick)
        add(cmd::MoveLandmark{LandmarkId{static_cast<std::uint64_t>(200 + i)}, -1.0 * i, 2.0, true});
    add(cmd::SetParams{.paused = false, .color_dim = 2});
    add(cmd::SetMode{Mode::Som});
    for (int i = 0; i < 5; ++i, ++tick)
        add(cmd::AddLandmark{8.0 - i, 8.0 + i});
    add(cmd::SetParams{.k = 8});
    add(cmd::SetMode{Mode::Graph});
    add(cmd::RemoveLandmark{LandmarkId{1}});
    s.total_ticks = tick + 5;
    return s;
}

}  // namespace fixture
