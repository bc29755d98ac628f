#include "embedsom/script.hpp"

#include "embedsom/io.hpp"
#include "embedsom/protocol.hpp"

#include "json.hpp"

#include <algorithm>

namespace embedsom {

using nlohmann::json;

namespace {

template <typename... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

[[noreturn]] void bad(const std::string &detail) { throw Error(ErrorKind::Input, "bad_script", detail); }

json parse_object(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &ex) {
        bad(ex.what());
    }
    if (!j.is_object())
        bad("script line is not a JSON object");
    return j;
}

template <typename T>
T get(const json &j, const char *key) {
    if (!j.contains(key))
        bad(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &) {
        bad(std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
std::optional<T> get_opt(const json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
    return get<T>(j, key);
}

std::string grid_text(const GridInit &g) { return std::to_string(g.rows) + "x" + std::to_string(g.cols); }

json init_to_json(const InitSpec &spec) {
    return std::visit(Overloaded{[](const GridInit &g) { return json(grid_text(g)); },
                                 [](const RandomInit &r) { return json{{"random", r.g}}; }},
                      spec);
}

InitSpec init_from_json(const json &j) {
    if (j.is_string())
        return parse_grid(j.get<std::string>());
    if (j.is_object())
        return RandomInit{get<std::size_t>(j, "random")};
    bad("init must be \"RxC\" or {\"random\": g}");
}

json to_json_object(const Command &command) {
    return std::visit(
        Overloaded{
            [](const cmd::LoadDataset &c) {
                json j{{"cmd", "LoadDataset"}, {"source", c.source}};
                if (c.format)
                    j["format"] = to_string(*c.format);
                if (c.transform)
                    j["transform"] = to_string(*c.transform);
                return j;
            },
            [](const cmd::SetMode &c) { return json{{"cmd", "SetMode"}, {"mode", to_string(c.mode)}}; },
            [](const cmd::SetParams &c) {
                json j{{"cmd", "SetParams"}};
                if (c.k) j["k"] = *c.k;
                if (c.mode) j["mode"] = to_string(*c.mode);
                if (c.sigma) j["sigma"] = *c.sigma;
                if (c.alpha) j["alpha"] = *c.alpha;
                if (c.alpha_km) j["alpha_km"] = *c.alpha_km;
                if (c.k_graph) j["k_g"] = *c.k_graph;
                if (c.paused) j["paused"] = *c.paused;
                if (c.color_dim) j["color_dim"] = *c.color_dim;
                return j;
            },
            [](const cmd::MoveLandmark &c) {
                return json{{"cmd", "MoveLandmark"},
                            {"id", static_cast<std::uint64_t>(c.id)},
                            {"x", c.x},
                            {"y", c.y},
                            {"pinned", c.pinned}};
            },
            [](const cmd::AddLandmark &c) { return json{{"cmd", "AddLandmark"}, {"x", c.x}, {"y", c.y}}; },
            [](const cmd::DuplicateLandmark &c) {
                return json{{"cmd", "DuplicateLandmark"}, {"id", static_cast<std::uint64_t>(c.id)}};
            },
            [](const cmd::RemoveLandmark &c) {
                return json{{"cmd", "RemoveLandmark"}, {"id", static_cast<std::uint64_t>(c.id)}};
            },
            [](const cmd::InitModel &c) { return json{{"cmd", "InitModel"}, {"init", init_to_json(c.spec)}}; },
            [](const cmd::Shutdown &) { return json{{"cmd", "Shutdown"}}; },
        },
        command);
}

Command from_json_object(const json &j) {
    const auto name = get<std::string>(j, "cmd");
    if (name == "LoadDataset") {
        cmd::LoadDataset c{get<std::string>(j, "source"), std::nullopt, std::nullopt};
        if (auto f = get_opt<std::string>(j, "format"))
            c.format = parse_format(*f);
        if (auto t = get_opt<std::string>(j, "transform"))
            c.transform = parse_transform_kind(*t);
        return c;
    }
    if (name == "SetMode")
        return cmd::SetMode{parse_mode(get<std::string>(j, "mode"))};
    if (name == "SetParams") {
        cmd::SetParams c;
        c.k = get_opt<std::size_t>(j, "k");
        if (auto m = get_opt<std::string>(j, "mode"))
            c.mode = parse_mode(*m);
        c.sigma = get_opt<double>(j, "sigma");
        c.alpha = get_opt<double>(j, "alpha");
        c.alpha_km = get_opt<double>(j, "alpha_km");
        c.k_graph = get_opt<std::size_t>(j, "k_g");
        c.paused = get_opt<bool>(j, "paused");
        c.color_dim = get_opt<std::size_t>(j, "color_dim");
        return c;
    }
    if (name == "MoveLandmark")
        return cmd::MoveLandmark{LandmarkId{get<std::uint64_t>(j, "id")}, get<double>(j, "x"), get<double>(j, "y"),
                                 get_opt<bool>(j, "pinned").value_or(false)};
    if (name == "AddLandmark")
        return cmd::AddLandmark{get<double>(j, "x"), get<double>(j, "y")};
    if (name == "DuplicateLandmark")
        return cmd::DuplicateLandmark{LandmarkId{get<std::uint64_t>(j, "id")}};
    if (name == "RemoveLandmark")
        return cmd::RemoveLandmark{LandmarkId{get<std::uint64_t>(j, "id")}};
    if (name == "InitModel") {
        if (!j.contains("init"))
            bad("InitModel needs 'init'");
        return cmd::InitModel{init_from_json(j.at("init"))};
    }
    if (name == "Shutdown")
        return cmd::Shutdown{};
    bad("unknown command '" + name + "'");
}

json config_object(const SessionConfig &c) {
    return json{{"cmd", "Config"},
                {"seed", c.seed},
                {"backend", to_string(c.backend)},
                {"k", c.k},
                {"mode", to_string(c.mode)},
                {"sigma", c.som.sigma},
                {"alpha", c.som.alpha},
                {"som_batch", c.som.batch_size},
                {"alpha_km", c.kmeans.alpha},
                {"kmeans_batch", c.kmeans.batch_size},
                {"stiffness", c.layout.stiffness},
                {"repulsion", c.layout.repulsion},
                {"damping", c.layout.damping},
                {"dt", c.layout.dt},
                {"k_g", c.k_graph},
                {"rebuild_every", c.graph_rebuild_every},
                {"chunk", c.chunk_size},
                {"init", init_to_json(c.init)}};
}

SessionConfig config_from_object(const json &j) {
    SessionConfig c;
    c.seed = get_opt<std::uint64_t>(j, "seed").value_or(c.seed);
    if (auto b = get_opt<std::string>(j, "backend"))
        c.backend = parse_backend(*b);
    c.k = get_opt<std::size_t>(j, "k").value_or(c.k);
    if (auto m = get_opt<std::string>(j, "mode"))
        c.mode = parse_mode(*m);
    c.som.sigma = get_opt<double>(j, "sigma").value_or(c.som.sigma);
    c.som.alpha = get_opt<double>(j, "alpha").value_or(c.som.alpha);
    c.som.batch_size = get_opt<std::size_t>(j, "som_batch").value_or(c.som.batch_size);
    c.kmeans.alpha = get_opt<double>(j, "alpha_km").value_or(c.kmeans.alpha);
    c.kmeans.batch_size = get_opt<std::size_t>(j, "kmeans_batch").value_or(c.kmeans.batch_size);
    c.layout.stiffness = get_opt<double>(j, "stiffness").value_or(c.layout.stiffness);
    c.layout.repulsion = get_opt<double>(j, "repulsion").value_or(c.layout.repulsion);
    c.layout.damping = get_opt<double>(j, "damping").value_or(c.layout.damping);
    c.layout.dt = get_opt<double>(j, "dt").value_or(c.layout.dt);
    c.k_graph = get_opt<std::size_t>(j, "k_g").value_or(c.k_graph);
    c.graph_rebuild_every = get_opt<std::size_t>(j, "rebuild_every").value_or(c.graph_rebuild_every);
    c.chunk_size = get_opt<std::size_t>(j, "chunk").value_or(c.chunk_size);
    if (j.contains("init"))
        c.init = init_from_json(j.at("init"));
    return c;
}

}  // namespace

std::string command_to_json(const Command &command) { return to_json_object(command).dump(); }

Command command_from_json(std::string_view json_text) { return from_json_object(parse_object(json_text)); }

std::string config_to_json(const SessionConfig &config) { return config_object(config).dump(); }

SessionConfig config_from_json(std::string_view json_text) { return config_from_object(parse_object(json_text)); }

Script parse_script(std::string_view text) {
    Script script;
    bool have_config = false;
    std::uint64_t last_tick = 0;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
            line.remove_suffix(1);
        if (line.empty())
            continue;
        if (script.total_ticks)
            bad("line " + std::to_string(line_no) + ": content after End");
        const json j = parse_object(line);
        const auto name = get<std::string>(j, "cmd");
        if (name == "Config") {
            if (have_config || !script.entries.empty())
                bad("line " + std::to_string(line_no) + ": Config must be the first line");
            script.config = config_from_object(j);
            have_config = true;
            continue;
        }
        if (!have_config)
            bad("line " + std::to_string(line_no) + ": the first line must be a Config object");
        const auto tick = get<std::uint64_t>(j, "tick");
        if (tick < last_tick)
            bad("line " + std::to_string(line_no) + ": tick indices must not decrease");
        last_tick = tick;
        if (name == "End") {
            script.total_ticks = tick;
            script.digest = get_opt<std::string>(j, "digest");
            continue;
        }
        try {
            script.entries.push_back({tick, from_json_object(j)});
        } catch (const Error &e) {
            bad("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!have_config)
        bad("script has no Config line");
    return script;
}

std::string write_script(const Script &script) {
    std::string out = config_object(script.config).dump() + "\n";
    for (const auto &e : script.entries) {
        json j = to_json_object(e.command);
        j["tick"] = e.tick;
        out += j.dump() + "\n";
    }
    if (script.total_ticks) {
        json j{{"cmd", "End"}, {"tick", *script.total_ticks}};
        if (script.digest)
            j["digest"] = *script.digest;
        out += j.dump() + "\n";
    }
    return out;
}

Script load_script(const std::filesystem::path &path) { return parse_script(read_file(path)); }

void ScriptRecorder::record(std::uint64_t tick, Command command) {
    if (!script_.entries.empty() && tick < script_.entries.back().tick)
        throw Error(ErrorKind::Contract, "bad_script", "recorded ticks must not decrease");
    script_.entries.push_back({tick, std::move(command)});
}

void ScriptRecorder::finish(std::uint64_t total_ticks, std::string digest) {
    script_.total_ticks = total_ticks;
    script_.digest = std::move(digest);
}

ReplayResult replay(const Script &script, std::optional<std::uint64_t> ticks) {
    std::uint64_t total = 0;
    if (ticks)
        total = *ticks;
    else if (script.total_ticks)
        total = *script.total_ticks;
    else if (!script.entries.empty())
        total = script.entries.back().tick + 1;

    Session session(script.config);
    proto::FrameDigest digest;
    ReplayResult result;
    std::size_t next = 0;
    for (std::uint64_t t = 0; t < total; ++t) {
        while (next < script.entries.size() && script.entries[next].tick == t)
            session.enqueue(script.entries[next++].command);
        TickResult r = session.tick();
        digest.add(r.frame);
        result.errors.insert(result.errors.end(), r.errors.begin(), r.errors.end());
        ++result.ticks;
        if (session.shutdown_requested())
            break;
    }
    result.digest = digest.hex();
    return result;
}

}  // namespace embedsom
