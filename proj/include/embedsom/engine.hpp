#pragma once

#include "embedsom/core.hpp"
#include "embedsom/graphmodel.hpp"
#include "embedsom/io.hpp"
#include "embedsom/rng.hpp"
#include "embedsom/som.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace embedsom {

enum class Mode { Som, Graph };

const char *to_string(Mode mode) noexcept;
Mode parse_mode(std::string_view name);

struct GridInit {
    std::size_t rows = 16;
    std::size_t cols = 16;
};
struct RandomInit {
    std::size_t g = 256;
};
using InitSpec = std::variant<GridInit, RandomInit>;

/// Parses "RxC" (e.g. "16x16").
GridInit parse_grid(std::string_view text);

std::size_t landmark_count(const InitSpec &spec) noexcept;

/// Bitonic: largest power of two <= min(requested, g, 64), at least 4.
/// Base: requested clamped to [3, g].
std::size_t clamp_k(std::size_t requested, std::size_t landmarks, KnnBackend backend) noexcept;

/// Grid: lo on a unit lattice, landmark r*cols+c at (c, r). Random: lo
/// uniform in the unit square. hi rows are dataset rows drawn with `rng`
/// (distinct when n >= g). Throws `model_too_small` for g < 4.
LandmarkModel initial_model(const Dataset &data, const InitSpec &spec, Rng &rng);

namespace cmd {

struct LoadDataset {
    std::string source;
    std::optional<DataFormat> format;
    std::optional<TransformKind> transform;
};
struct SetMode {
    Mode mode;
};
struct SetParams {
    std::optional<std::size_t> k{};
    std::optional<Mode> mode{};
    std::optional<double> sigma{};
    std::optional<double> alpha{};
    std::optional<double> alpha_km{};
    std::optional<std::size_t> k_graph{};
    std::optional<bool> paused{};
    std::optional<std::size_t> color_dim{};
};
struct MoveLandmark {
    LandmarkId id;
    double x;
    double y;
    bool pinned;
};
struct AddLandmark {
    double x;
    double y;
};
struct DuplicateLandmark {
    LandmarkId id;
};
struct RemoveLandmark {
    LandmarkId id;
};
struct InitModel {
    InitSpec spec;
};
struct Shutdown {};

}  // namespace cmd

using Command = std::variant<cmd::LoadDataset, cmd::SetMode, cmd::SetParams, cmd::MoveLandmark, cmd::AddLandmark,
                             cmd::DuplicateLandmark, cmd::RemoveLandmark, cmd::InitModel, cmd::Shutdown>;

struct SessionConfig {
    std::uint64_t seed = 0;
    KnnBackend backend = KnnBackend::Bitonic;
    std::size_t k = 16;
    Mode mode = Mode::Som;
    SomConfig som{1.0, 0.1, 256};
    KmeansConfig kmeans{0.05, 256};
    LayoutParams layout{};
    std::size_t k_graph = 3;
    std::size_t graph_rebuild_every = 10;
    std::size_t chunk_size = 131072;
    std::size_t workers = 1;  // 0 = hardware concurrency
    InitSpec init = GridInit{16, 16};
};

/// Everything a client needs to draw one frame.
struct FramePacket {
    std::uint32_t frame_id = 0;
    Matrix<float> positions;  // n x 2
    Matrix<float> landmarks;  // g x 2
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    std::vector<std::uint8_t> colors;  // n
};

struct CommandError {
    std::string code;
    std::string detail;
};

struct TickResult {
    FramePacket frame;
    std::vector<CommandError> errors;  // commands rejected while draining
};

/// Per-point min-max quantization of one dimension to 0..255 (constant → 128).
std::vector<std::uint8_t> color_channel(const Dataset &data, std::size_t color_dim);

/// Single-writer interactive session: owns dataset, landmark model and
/// trainer state. Commands are queued and drained in order at the start of
/// each `tick`; with the same seed and command script the emitted frame
/// stream is identical.
class Session {
public:
    explicit Session(SessionConfig config = {});

    void enqueue(Command command);
    /// Applies a command immediately. Throws `Error` when rejected; the
    /// session is unchanged in that case.
    void apply(const Command &command);
    TickResult tick();

    void load_dataset(Dataset data);
    void init_model(const InitSpec &spec);

    bool has_dataset() const noexcept { return dataset_.has_value(); }
    bool has_model() const noexcept { return model_.size() > 0; }
    const Dataset &dataset() const;
    const LandmarkModel &model() const noexcept { return model_; }
    const EdgeSet &edges() const noexcept { return edges_; }
    const Matrix<float> &positions() const noexcept { return positions_; }
    const SessionConfig &config() const noexcept { return config_; }
    Mode mode() const noexcept { return config_.mode; }
    std::size_t k() const noexcept { return config_.k; }
    bool paused() const noexcept { return paused_; }
    std::size_t color_dim() const noexcept { return color_dim_; }
    std::uint32_t frame_id() const noexcept { return frame_id_; }
    std::size_t chunk_cursor() const noexcept { return chunk_cursor_; }
    bool shutdown_requested() const noexcept { return shutdown_; }
    const Rng &rng() const noexcept { return rng_; }

    /// Stable id of the landmark at `index` in the most recently emitted frame.
    std::optional<LandmarkId> frame_landmark_id(std::size_t index) const noexcept;

    /// k after clamping a request to the backend's valid set and to g.
    std::size_t clamp_k(std::size_t requested) const noexcept;

private:
    void apply_impl(const cmd::LoadDataset &c);
    void apply_impl(const cmd::SetMode &c);
    void apply_impl(const cmd::SetParams &c);
    void apply_impl(const cmd::MoveLandmark &c);
    void apply_impl(const cmd::AddLandmark &c);
    void apply_impl(const cmd::DuplicateLandmark &c);
    void apply_impl(const cmd::RemoveLandmark &c);
    void apply_impl(const cmd::InitModel &c);
    void apply_impl(const cmd::Shutdown &c);

    void require_model() const;
    void set_mode(Mode mode);
    void move_landmark(std::size_t index, double x, double y, bool pinned);
    LandmarkId duplicate(LandmarkId id);
    void rebuild_edges();
    void embed_all();
    void embed_step();
    FramePacket make_packet() const;

    SessionConfig config_;
    Rng rng_;
    std::optional<Dataset> dataset_;
    std::vector<std::uint8_t> colors_;
    LandmarkModel model_;
    Matrix<double> velocities_;
    EdgeSet edges_;
    bool edges_dirty_ = true;
    std::size_t ticks_since_rebuild_ = 0;
    bool paused_ = false;
    std::size_t color_dim_ = 0;
    Matrix<float> positions_;
    std::size_t chunk_cursor_ = 0;
    std::uint32_t frame_id_ = 0;
    std::vector<LandmarkId> frame_ids_;
    std::deque<Command> queue_;
    bool shutdown_ = false;
};

/// Unattended run: grid init, `epochs` SOM ticks with sigma and alpha
/// annealed linearly between the given endpoints, then one full embed.
struct BatchConfig {
    std::uint64_t seed = 0;
    InitSpec init = GridInit{16, 16};
    std::size_t k = 16;
    KnnBackend backend = KnnBackend::Bitonic;
    std::size_t epochs = 100;
    std::size_t batch_size = 256;
    double sigma_from = 1.5, sigma_to = 0.2;
    double alpha_from = 0.2, alpha_to = 0.02;
    std::size_t workers = 1;
};

struct BatchResult {
    LandmarkModel model;
    Matrix<float> positions;
    std::size_t k = 0;  // after clamping to the model
};

BatchResult embed_batch(const Dataset &data, const BatchConfig &config);

}  // namespace embedsom
