#include "embedsom/engine.hpp"

#include "embedsom/projection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_set>

namespace embedsom {

const char *to_string(Mode mode) noexcept { return mode == Mode::Som ? "som" : "graph"; }

Mode parse_mode(std::string_view name) {
    if (name == "som")
        return Mode::Som;
    if (name == "graph")
        return Mode::Graph;
    throw Error(ErrorKind::Parameter, "invalid_mode", "unknown mode '" + std::string(name) + "'");
}

GridInit parse_grid(std::string_view text) {
    const auto x = text.find_first_of("xX");
    GridInit g{0, 0};
    auto num = [](std::string_view s, std::size_t &out) {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
        return ec == std::errc{} && p == s.data() + s.size();
    };
    if (x == std::string_view::npos || !num(text.substr(0, x), g.rows) || !num(text.substr(x + 1), g.cols) ||
        g.rows == 0 || g.cols == 0)
        throw Error(ErrorKind::Parameter, "invalid_grid", "grid must look like RxC, got '" + std::string(text) + "'");
    return g;
}

std::vector<std::uint8_t> color_channel(const Dataset &data, std::size_t color_dim) {
    if (color_dim >= data.dim())
        throw Error(ErrorKind::Parameter, "invalid_color_dim",
                    "color dimension " + std::to_string(color_dim) + " out of range (d = " +
                        std::to_string(data.dim()) + ")");
    const double lo = data.stats().min[color_dim];
    const double hi = data.stats().max[color_dim];
    std::vector<std::uint8_t> out(data.size(), 128);
    if (hi > lo) {
        const double scale = 255.0 / (hi - lo);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double q = std::round((data.points()(i, color_dim) - lo) * scale);
            out[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
        }
    }
    return out;
}

Session::Session(SessionConfig config) : config_(std::move(config)), rng_(config_.seed) {
    validate(config_.som);
    validate(config_.kmeans);
    validate(config_.layout);
    if (config_.chunk_size == 0)
        throw Error(ErrorKind::Parameter, "invalid_chunk", "chunk size must be >= 1");
}

const Dataset &Session::dataset() const {
    if (!dataset_)
        throw Error(ErrorKind::State, "no_dataset", "no dataset loaded");
    return *dataset_;
}

void Session::enqueue(Command command) { queue_.push_back(std::move(command)); }

void Session::apply(const Command &command) {
    std::visit([this](const auto &c) { apply_impl(c); }, command);
}

std::size_t Session::clamp_k(std::size_t requested) const noexcept {
    return embedsom::clamp_k(requested, model_.size(), config_.backend);
}

std::size_t clamp_k(std::size_t requested, std::size_t landmarks, KnnBackend backend) noexcept {
    const std::size_t g = std::max<std::size_t>(landmarks, 3);
    if (backend == KnnBackend::Base)
        return std::clamp<std::size_t>(requested, 3, g);
    std::size_t cap = std::min<std::size_t>({requested, g, 64});
    std::size_t k = 4;
    while (k * 2 <= cap)
        k *= 2;
    return k;
}

void Session::require_model() const {
    if (!dataset_)
        throw Error(ErrorKind::State, "no_dataset", "no dataset loaded");
    if (!has_model())
        throw Error(ErrorKind::State, "no_model", "landmark model not initialized");
}

void Session::load_dataset(Dataset data) {
    if (color_dim_ >= data.dim())
        color_dim_ = 0;
    colors_ = color_channel(data, color_dim_);
    dataset_ = std::move(data);
    positions_ = Matrix<float>(dataset_->size(), 2);
    chunk_cursor_ = 0;
    model_ = LandmarkModel();
    init_model(config_.init);
}

std::size_t landmark_count(const InitSpec &spec) noexcept {
    return std::visit(
        [](const auto &s) {
            if constexpr (std::is_same_v<std::decay_t<decltype(s)>, GridInit>)
                return s.rows * s.cols;
            else
                return s.g;
        },
        spec);
}

LandmarkModel initial_model(const Dataset &data, const InitSpec &spec, Rng &rng) {
    const std::size_t g = landmark_count(spec);
    if (g < 4)
        throw Error(ErrorKind::Parameter, "model_too_small", "a model needs at least 4 landmarks, got " + std::to_string(g));

    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    Matrix<float> lo(g, 2);
    if (const auto *grid = std::get_if<GridInit>(&spec)) {
        for (std::size_t r = 0; r < grid->rows; ++r)
            for (std::size_t c = 0; c < grid->cols; ++c) {
                lo(r * grid->cols + c, 0) = static_cast<float>(c);
                lo(r * grid->cols + c, 1) = static_cast<float>(r);
            }
    } else {
        for (auto &v : lo.data())
            v = static_cast<float>(rng.uniform());
    }

    // Floyd's sampling: g distinct rows when n >= g, otherwise with replacement.
    std::vector<std::size_t> rows;
    rows.reserve(g);
    if (n >= g) {
        std::unordered_set<std::size_t> seen;
        for (std::size_t j = n - g; j < n; ++j) {
            const auto t = static_cast<std::size_t>(rng.below(j + 1));
            const std::size_t pick = seen.count(t) ? j : t;
            seen.insert(pick);
            rows.push_back(pick);
        }
    } else {
        for (std::size_t j = 0; j < g; ++j)
            rows.push_back(static_cast<std::size_t>(rng.below(n)));
    }
    Matrix<float> hi(g, d);
    for (std::size_t j = 0; j < g; ++j) {
        auto src = data.points().row(rows[j]);
        std::copy(src.begin(), src.end(), hi.row(j).begin());
    }
    return LandmarkModel(std::move(hi), std::move(lo));
}

void Session::init_model(const InitSpec &spec) {
    if (!dataset_)
        throw Error(ErrorKind::State, "no_dataset", "cannot initialize a model without a dataset");
    LandmarkModel model = initial_model(*dataset_, spec, rng_);
    const std::size_t g = model.size();
    config_.init = spec;
    model_ = std::move(model);
    velocities_ = Matrix<double>(g, 2);
    config_.k = clamp_k(config_.k);
    edges_dirty_ = true;
    embed_all();
}

void Session::apply_impl(const cmd::LoadDataset &c) {
    Dataset ds = embedsom::load_dataset(c.source, c.format, c.transform);
    load_dataset(std::move(ds));
}

void Session::apply_impl(const cmd::SetMode &c) { set_mode(c.mode); }

void Session::set_mode(Mode mode) {
    if (mode != config_.mode) {
        config_.mode = mode;
        edges_dirty_ = true;
    }
}

void Session::apply_impl(const cmd::SetParams &c) {
    // validate everything before touching state
    SomConfig som = config_.som;
    KmeansConfig km = config_.kmeans;
    if (c.sigma)
        som.sigma = *c.sigma;
    if (c.alpha)
        som.alpha = *c.alpha;
    if (c.alpha_km)
        km.alpha = *c.alpha_km;
    validate(som);
    validate(km);
    if (c.k_graph && *c.k_graph < 1)
        throw Error(ErrorKind::Parameter, "invalid_k", "graph k must be >= 1");
    if (c.k && *c.k < 1)
        throw Error(ErrorKind::Parameter, "invalid_k", "k must be >= 1");
    if (c.color_dim) {
        if (!dataset_)
            throw Error(ErrorKind::State, "no_dataset", "no dataset loaded");
        if (*c.color_dim >= dataset_->dim())
            throw Error(ErrorKind::Parameter, "invalid_color_dim",
                        "color dimension " + std::to_string(*c.color_dim) + " out of range");
    }

    config_.som = som;
    config_.kmeans = km;
    if (c.k)
        config_.k = clamp_k(*c.k);
    if (c.mode)
        set_mode(*c.mode);
    if (c.k_graph && *c.k_graph != config_.k_graph) {
        config_.k_graph = *c.k_graph;
        edges_dirty_ = true;
    }
    if (c.paused)
        paused_ = *c.paused;
    if (c.color_dim && *c.color_dim != color_dim_) {
        color_dim_ = *c.color_dim;
        colors_ = color_channel(*dataset_, color_dim_);
    }
}

void Session::move_landmark(std::size_t index, double x, double y, bool pinned) {
    auto lo = model_.lo_mut();
    lo(index, 0) = static_cast<float>(x);
    lo(index, 1) = static_cast<float>(y);
    model_.set_pinned(index, pinned);
    velocities_(index, 0) = velocities_(index, 1) = 0.0;
}

void Session::apply_impl(const cmd::MoveLandmark &c) {
    require_model();
    if (!std::isfinite(c.x) || !std::isfinite(c.y))
        throw Error(ErrorKind::Parameter, "non_finite", "landmark position must be finite");
    move_landmark(model_.require_index(c.id), c.x, c.y, c.pinned);
}

LandmarkId Session::duplicate(LandmarkId id) {
    const auto &st = dataset_->stats();
    std::vector<double> ranges(st.min.size());
    for (std::size_t j = 0; j < ranges.size(); ++j)
        ranges[j] = st.max[j] - st.min[j];
    const auto res = duplicate_landmark(model_, id, ranges, rng_);
    const double zero[2] = {0.0, 0.0};
    velocities_.append_row(zero);
    edges_dirty_ = true;
    return res.id;
}

void Session::apply_impl(const cmd::AddLandmark &c) {
    require_model();
    if (!std::isfinite(c.x) || !std::isfinite(c.y))
        throw Error(ErrorKind::Parameter, "non_finite", "landmark position must be finite");
    if (config_.mode == Mode::Som) {
        const auto hi = fit_hi_for_new_landmark({c.x, c.y}, model_);
        model_.append(hi, {c.x, c.y});
        const double zero[2] = {0.0, 0.0};
        velocities_.append_row(zero);
        edges_dirty_ = true;
        return;
    }
    std::size_t nearest = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < model_.size(); ++j) {
        const double dx = model_.lo()(j, 0) - c.x;
        const double dy = model_.lo()(j, 1) - c.y;
        if (dx * dx + dy * dy < best) {
            best = dx * dx + dy * dy;
            nearest = j;
        }
    }
    const LandmarkId id = duplicate(model_.ids()[nearest]);
    move_landmark(model_.require_index(id), c.x, c.y, false);
}

void Session::apply_impl(const cmd::DuplicateLandmark &c) {
    require_model();
    model_.require_index(c.id);
    duplicate(c.id);
}

void Session::apply_impl(const cmd::RemoveLandmark &c) {
    require_model();
    const std::size_t idx = model_.require_index(c.id);
    remove_landmark(model_, c.id, std::max<std::size_t>(4, config_.k));
    velocities_.erase_row(idx);
    edges_dirty_ = true;
}

void Session::apply_impl(const cmd::InitModel &c) { init_model(c.spec); }

void Session::apply_impl(const cmd::Shutdown &) { shutdown_ = true; }

void Session::rebuild_edges() {
    const std::size_t g = model_.size();
    const std::size_t kg = std::min(config_.k_graph, g - 1);
    const auto hi = model_.hi().view();
    edges_ = build_knn_graph(hi, kg, rest_scale_for_mean(hi, kg, 1.0));
    edges_dirty_ = false;
    ticks_since_rebuild_ = 0;
}

void Session::embed_all() {
    EmbedOptions opt;
    opt.workers = config_.workers;
    embed_into(dataset_->points().view(), model_, EmbedParams{config_.k}, config_.backend, positions_.view(), opt);
    chunk_cursor_ = 0;
}

void Session::embed_step() {
    const std::size_t n = dataset_->size();
    if (n <= config_.chunk_size) {
        embed_all();
        return;
    }
    const std::size_t begin = chunk_cursor_;
    const std::size_t end = std::min(n, begin + config_.chunk_size);
    EmbedOptions opt;
    opt.workers = config_.workers;
    embed_into(dataset_->points().view().slice(begin, end), model_, EmbedParams{config_.k}, config_.backend,
               positions_.view().slice(begin, end), opt);
    chunk_cursor_ = end == n ? 0 : end;
}

FramePacket Session::make_packet() const {
    FramePacket p;
    p.frame_id = frame_id_;
    p.positions = positions_;
    p.landmarks = model_.lo();
    if (config_.mode == Mode::Graph)
        for (const auto &e : edges_.edges)
            p.edges.emplace_back(e.i, e.j);
    p.colors = colors_;
    return p;
}

TickResult Session::tick() {
    TickResult result;
    while (!queue_.empty()) {
        Command c = std::move(queue_.front());
        queue_.pop_front();
        try {
            apply(c);
        } catch (const Error &e) {
            result.errors.push_back({e.code(), e.what()});
        }
    }
    require_model();

    if (!paused_) {
        if (config_.mode == Mode::Som)
            som_tick(*dataset_, model_, config_.som, rng_);
        else
            kmeans_tick(*dataset_, model_, config_.kmeans, rng_);
    }
    if (config_.mode == Mode::Graph) {
        if (edges_dirty_ || ticks_since_rebuild_ >= config_.graph_rebuild_every)
            rebuild_edges();
        LayoutState st{std::move(velocities_), config_.layout};
        layout_tick(model_.lo_mut(), edges_, st, model_.pinned_mask());
        velocities_ = std::move(st.velocities);
        ++ticks_since_rebuild_;
    }
    embed_step();

    ++frame_id_;
    frame_ids_ = model_.ids();
    result.frame = make_packet();
    return result;
}

std::optional<LandmarkId> Session::frame_landmark_id(std::size_t index) const noexcept {
    if (index < frame_ids_.size())
        return frame_ids_[index];
    return std::nullopt;
}

BatchResult embed_batch(const Dataset &data, const BatchConfig &config) {
    Rng rng(config.seed);
    BatchResult out;
    out.model = initial_model(data, config.init, rng);
    const std::size_t steps = config.epochs;
    for (std::size_t e = 0; e < steps; ++e) {
        const double t = steps > 1 ? static_cast<double>(e) / static_cast<double>(steps - 1) : 0.0;
        const SomConfig som{std::lerp(config.sigma_from, config.sigma_to, t),
                            std::lerp(config.alpha_from, config.alpha_to, t), config.batch_size};
        som_tick(data, out.model, som, rng);
    }
    out.k = clamp_k(config.k, out.model.size(), config.backend);
    out.positions = embed(data.points(), out.model, EmbedParams{out.k}, config.backend,
                          EmbedOptions{config.workers, 4096});
    return out;
}

}  // namespace embedsom
