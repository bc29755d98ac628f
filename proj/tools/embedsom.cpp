// Command-line entry points: serve, embed, bench, demo-data.

#include "embedsom/bench.hpp"
#include "embedsom/demo_data.hpp"
#include "embedsom/engine.hpp"
#include "embedsom/io.hpp"
#include "embedsom/script.hpp"
#include "embedsom/server.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <cstdio>
#include <iostream>
#include <random>
#include <thread>

#include <pthread.h>

using namespace embedsom;

namespace {

// One line on stderr: "embedsom: error code=<code> kind=<kind>: <message>".
int fail(const std::string &code, const std::string &kind, std::string message) {
    for (auto &ch : message)
        if (ch == '\n' || ch == '\r')
            ch = ' ';
    std::fprintf(stderr, "embedsom: error code=%s kind=%s: %s\n", code.c_str(), kind.c_str(), message.c_str());
    return 1;
}

struct Common {
    std::string data;
    std::string format;
    std::string transform;
    std::optional<std::uint64_t> seed;
    std::string grid = "16x16";
    std::size_t k = 16;
    std::string backend = "bitonic";
    std::size_t workers = 1;
};

std::uint64_t resolve_seed(const Common &c) {
    if (c.seed)
        return *c.seed;
    std::random_device rd;
    const std::uint64_t s = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    std::fprintf(stderr, "embedsom: seed=%llu\n", static_cast<unsigned long long>(s));
    return s;
}

std::optional<DataFormat> opt_format(const std::string &s) {
    if (s.empty())
        return std::nullopt;
    return parse_format(s);
}

std::optional<TransformKind> opt_transform(const std::string &s) {
    if (s.empty())
        return std::nullopt;
    return parse_transform_kind(s);
}

void add_data_flags(CLI::App *app, Common &c) {
    app->add_option("--data", c.data, "Dataset path (fcs, tsv, csv, obj)");
    app->add_option("--format", c.format, "Force input format")->check(CLI::IsMember({"fcs", "tsv", "csv", "obj"}));
    app->add_option("--transform", c.transform, "Per-dimension transform")
        ->check(CLI::IsMember({"none", "zscore", "minmax"}));
}

void add_model_flags(CLI::App *app, Common &c) {
    app->add_option("--seed", c.seed, "RNG seed (drawn from entropy and printed when omitted)");
    app->add_option("--grid", c.grid, "SOM grid RxC")->capture_default_str();
    app->add_option("--k", c.k, "Neighbors per point")->capture_default_str();
    app->add_option("--backend", c.backend, "k-NN backend")->check(CLI::IsMember({"base", "bitonic"}))->capture_default_str();
    app->add_option("--workers", c.workers, "Worker threads (0 = all cores)")->capture_default_str();
}

// ---- serve ------------------------------------------------------------------

struct ServeOpts {
    std::uint16_t port = 7878;
    std::string bind = "127.0.0.1";
    std::string mode = "som";
    std::size_t chunk = 131072;
    double rate = 30.0;
    std::optional<std::uint64_t> ticks;
    std::string record;
    std::string replay;
};

int run_replay(const ServeOpts &o) {
    const Script script = load_script(o.replay);
    const ReplayResult r = replay(script, o.ticks);
    std::printf("ticks=%llu digest=%s\n", static_cast<unsigned long long>(r.ticks), r.digest.c_str());
    for (const auto &e : r.errors)
        std::fprintf(stderr, "embedsom: rejected command code=%s: %s\n", e.code.c_str(), e.detail.c_str());
    if (script.digest && !o.ticks && *script.digest != r.digest)
        return fail("digest_mismatch", "State", "replay digest " + r.digest + " differs from recorded " + *script.digest);
    return 0;
}

int run_serve(const Common &c, const ServeOpts &o) {
    if (!o.replay.empty())
        return run_replay(o);
    SessionConfig cfg;
    cfg.seed = resolve_seed(c);
    cfg.backend = parse_backend(c.backend);
    cfg.k = c.k;
    cfg.mode = parse_mode(o.mode);
    cfg.chunk_size = o.chunk;
    cfg.workers = c.workers;
    cfg.init = parse_grid(c.grid);
    if (cfg.chunk_size == 0)
        throw Error(ErrorKind::Parameter, "invalid_chunk", "chunk must be positive");

    ServerConfig sc;
    sc.bind_address = o.bind;
    sc.port = o.port;
    sc.tick_hz = o.rate;
    sc.max_ticks = o.ticks;
    if (!o.record.empty())
        sc.record_path = o.record;

    // Signals are taken synchronously by a dedicated thread.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    Server server(cfg, sc);
    if (!c.data.empty())
        server.submit(cmd::LoadDataset{c.data, opt_format(c.format), opt_transform(c.transform)});
    server.start();
    std::fprintf(stderr, "embedsom: listening on %s:%u (raw TCP or ws://%s:%u/)\n", o.bind.c_str(),
                 static_cast<unsigned>(server.port()), o.bind.c_str(), static_cast<unsigned>(server.port()));
    std::thread([&server, set] {
        int sig = 0;
        sigwait(&set, &sig);
        server.request_stop();
    }).detach();
    server.wait();
    server.stop();
    if (auto fatal = server.fatal_error())
        return fail("serve_failed", "State", *fatal);
    std::printf("ticks=%llu digest=%s\n", static_cast<unsigned long long>(server.ticks()), server.digest().c_str());
    return 0;
}

// ---- embed ------------------------------------------------------------------

struct EmbedOpts {
    std::size_t epochs = 100;
    std::size_t batch = 256;
    std::string out;
};

int run_embed(const Common &c, const EmbedOpts &o) {
    if (c.data.empty())
        throw Error(ErrorKind::Parameter, "missing_data", "--data is required");
    const Dataset data = load_dataset(c.data, opt_format(c.format), opt_transform(c.transform));
    BatchConfig bc;
    bc.seed = resolve_seed(c);
    bc.init = parse_grid(c.grid);
    bc.k = c.k;
    bc.backend = parse_backend(c.backend);
    bc.epochs = o.epochs;
    bc.batch_size = o.batch;
    bc.workers = c.workers;
    const BatchResult r = embed_batch(data, bc);
    const std::string text = write_delimited(Dataset(r.positions, {"x", "y"}), '\t', true);
    if (o.out.empty() || o.out == "-")
        std::fwrite(text.data(), 1, text.size(), stdout);
    else
        write_file(o.out, text);
    return 0;
}

// ---- bench ------------------------------------------------------------------

struct BenchOpts {
    std::vector<std::string> backends{"base", "bitonic"};
    std::vector<std::size_t> n{std::size_t{1} << 20};
    std::vector<std::size_t> d{4, 16, 64};
    std::vector<std::size_t> g{64, 256, 1024};
    std::vector<std::size_t> k{8, 16, 64};
    std::vector<std::string> stages{"knn", "projection", "fused"};
    std::size_t reps = 10;
    std::size_t warmup = 1;
    std::uint64_t seed = 1;
    std::size_t workers = 1;
};

int run_bench_cmd(const BenchOpts &o) {
    BenchGrid grid;
    grid.backends.clear();
    for (const auto &b : o.backends)
        grid.backends.push_back(parse_backend(b));
    grid.stages.clear();
    for (const auto &s : o.stages)
        grid.stages.push_back(parse_stage(s));
    grid.n = o.n;
    grid.d = o.d;
    grid.g = o.g;
    grid.k = o.k;
    grid.reps = o.reps;
    grid.warmup = o.warmup;
    grid.seed = o.seed;
    grid.workers = o.workers;
    validate(grid);
    std::printf("%s\n", kBenchHeader);
    std::fflush(stdout);
    run_bench(grid, [](const BenchRow &row) {
        std::printf("%s\n", format_bench_row(row).c_str());
        std::fflush(stdout);
    });
    return 0;
}

// ---- demo-data --------------------------------------------------------------

struct DemoOpts {
    std::string kind = "gaussians";
    std::size_t n = 10000;
    std::size_t d = 4;
    std::size_t clusters = 3;
    double sd = 1.0;
    double spread = 10.0;
    double noise = 0.0;
    std::uint64_t seed = 1;
    std::string out;
    std::string labels;
    std::string format = "tsv";
};

int run_demo(const DemoOpts &o) {
    demo::LabeledData ld;
    if (o.kind == "gaussians")
        ld = demo::gaussians(o.clusters, o.n, o.d, o.seed, o.sd, o.spread);
    else if (o.kind == "extruded-s")
        ld = demo::extruded_s(o.n, o.seed, o.noise);
    else
        ld = {demo::uniform(o.n, o.d, o.seed), std::vector<std::uint32_t>(o.n, 0)};
    const char delim = o.format == "csv" ? ',' : '\t';
    const std::string text = write_delimited(ld.data, delim, true);
    if (o.out.empty() || o.out == "-")
        std::fwrite(text.data(), 1, text.size(), stdout);
    else
        write_file(o.out, text);
    if (!o.labels.empty()) {
        std::string lab;
        for (auto l : ld.labels)
            lab += std::to_string(l) + "\n";
        write_file(o.labels, lab);
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Interactive landmark-based dimensionality reduction"};
    app.require_subcommand(1);

    Common common;
    ServeOpts serve;
    auto *s = app.add_subcommand("serve", "Run an interactive session over TCP (or replay a script headlessly)");
    add_data_flags(s, common);
    add_model_flags(s, common);
    s->add_option("--port", serve.port, "TCP port (0 = ephemeral)")->capture_default_str();
    s->add_option("--bind", serve.bind, "Bind address")->capture_default_str();
    s->add_option("--mode", serve.mode, "Initial trainer")->check(CLI::IsMember({"som", "graph"}))->capture_default_str();
    s->add_option("--chunk", serve.chunk, "Points re-projected per tick")->capture_default_str();
    s->add_option("--rate", serve.rate, "Ticks per second")->capture_default_str();
    s->add_option("--ticks", serve.ticks, "Stop after this many ticks");
    s->add_option("--record", serve.record, "Write the command script here on exit");
    s->add_option("--replay", serve.replay, "Replay a command script headlessly and print its digest");

    EmbedOpts embed_opts;
    auto *e = app.add_subcommand("embed", "Offline batch: train a grid SOM with annealing, write n x 2 positions");
    add_data_flags(e, common);
    add_model_flags(e, common);
    e->add_option("--epochs", embed_opts.epochs, "SOM ticks")->capture_default_str();
    e->add_option("--batch", embed_opts.batch, "Samples per SOM tick")->capture_default_str();
    e->add_option("--out", embed_opts.out, "Output path (default stdout)");

    BenchOpts bench;
    auto *b = app.add_subcommand("bench", "k-NN / projection / fused timing matrix as CSV");
    b->add_option("--backend", bench.backends, "Backends")->delimiter(',')->check(CLI::IsMember({"base", "bitonic"}));
    b->add_option("--n", bench.n, "Point counts")->delimiter(',');
    b->add_option("--d", bench.d, "Dimensions")->delimiter(',');
    b->add_option("--g", bench.g, "Landmark counts")->delimiter(',');
    b->add_option("--k", bench.k, "Neighbor counts")->delimiter(',');
    b->add_option("--stage", bench.stages, "Stages")->delimiter(',')->check(CLI::IsMember({"knn", "projection", "fused"}));
    b->add_option("--reps", bench.reps, "Timed repetitions")->capture_default_str();
    b->add_option("--warmup", bench.warmup, "Warm-up runs")->capture_default_str();
    b->add_option("--seed", bench.seed, "Data seed")->capture_default_str();
    b->add_option("--workers", bench.workers, "Worker threads")->capture_default_str();

    DemoOpts demo_opts;
    auto *dd = app.add_subcommand("demo-data", "Write a synthetic dataset");
    dd->add_option("--kind", demo_opts.kind, "Generator")
        ->check(CLI::IsMember({"gaussians", "extruded-s", "uniform"}))
        ->capture_default_str();
    dd->add_option("--n", demo_opts.n, "Rows")->capture_default_str();
    dd->add_option("--d", demo_opts.d, "Dimensions (gaussians, uniform)")->capture_default_str();
    dd->add_option("--clusters", demo_opts.clusters, "Gaussian clusters")->capture_default_str();
    dd->add_option("--sd", demo_opts.sd, "Gaussian sd")->capture_default_str();
    dd->add_option("--spread", demo_opts.spread, "Gaussian center spread")->capture_default_str();
    dd->add_option("--noise", demo_opts.noise, "Extruded-S noise sd")->capture_default_str();
    dd->add_option("--seed", demo_opts.seed, "Seed")->capture_default_str();
    dd->add_option("--out", demo_opts.out, "Output path (default stdout)");
    dd->add_option("--labels", demo_opts.labels, "Also write one label per line here");
    dd->add_option("--format", demo_opts.format, "Output format")->check(CLI::IsMember({"tsv", "csv"}))->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp &ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError &ex) {
        fail("usage", "Parameter", ex.what());
        return 2;
    }

    try {
        if (*s)
            return run_serve(common, serve);
        if (*e)
            return run_embed(common, embed_opts);
        if (*b)
            return run_bench_cmd(bench);
        if (*dd)
            return run_demo(demo_opts);
    } catch (const Error &ex) {
        return fail(ex.code(), to_string(ex.kind()), ex.what());
    } catch (const std::exception &ex) {
        return fail("internal", "Internal", ex.what());
    }
    return 0;
}
