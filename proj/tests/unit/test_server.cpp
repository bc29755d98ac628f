#include "doctest.h"
#include "expect.hpp"
#include "fixtures.hpp"

#include "embedsom/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <functional>

using namespace embedsom;
using namespace std::chrono_literals;

namespace {

class Client {
public:
    explicit Client(std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        REQUIRE(::connect(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) == 0);
        timeval tv{0, 200000};
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    }
    ~Client() { ::close(fd_); }

    void send(const proto::Message &m) { send_raw(proto::encode(m)); }
    void send_raw(const std::vector<std::uint8_t> &bytes) {
        REQUIRE(::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(bytes.size()));
    }

    /// Reads until `pred` accepts a message or the deadline passes.
    std::optional<proto::Message> until(const std::function<bool(const proto::Message &)> &pred,
                                        std::chrono::milliseconds timeout = 10s) {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            while (auto m = decoder_.next()) {
                seen_.push_back(*m);
                if (pred(*m))
                    return m;
            }
            if (std::chrono::steady_clock::now() > deadline)
                return std::nullopt;
            std::uint8_t buf[65536];
            const ssize_t r = ::recv(fd_, buf, sizeof buf, 0);
            if (r > 0)
                decoder_.feed({buf, static_cast<std::size_t>(r)});
            else if (r == 0)
                return std::nullopt;
        }
    }
    template <typename T>
    std::optional<T> next_of(std::chrono::milliseconds timeout = 10s) {
        auto m = until([](const proto::Message &x) { return std::holds_alternative<T>(x); }, timeout);
        if (!m)
            return std::nullopt;
        return std::get<T>(*m);
    }
    std::optional<proto::ErrorMessage> error_with(const std::string &code) {
        auto m = until([&](const proto::Message &x) {
            const auto *e = std::get_if<proto::ErrorMessage>(&x);
            return e && e->code == code;
        });
        if (!m)
            return std::nullopt;
        return std::get<proto::ErrorMessage>(*m);
    }
    const std::vector<proto::Message> &seen() const { return seen_; }

private:
    int fd_ = -1;
    proto::StreamDecoder decoder_;
    std::vector<proto::Message> seen_;
};

}  // namespace

TEST_CASE("server: handshake, frames, commands, errors") {
    const auto dir = fixture::scratch_dir("server");
    const auto data = fixture::write_gaussians(dir, 2000);
    SessionConfig sc;
    sc.seed = 3;
    ServerConfig cfg;
    cfg.port = 0;
    cfg.tick_hz = 100;
    cfg.record_path = dir / "rec.jsonl";
    Server server(sc, cfg);
    server.submit(cmd::LoadDataset{data.string(), std::nullopt, std::nullopt});
    server.start();
    REQUIRE(server.port() != 0);

    Client c(server.port());
    c.send(proto::RemoveLandmark{0});
    CHECK(c.error_with("hello_required"));
    c.send(proto::ClientHello{});
    const auto hello = c.next_of<proto::ServerHello>();
    REQUIRE(hello);
    CHECK(hello->protocol_version == proto::kProtocolVersion);
    // The hello may precede the initial load; DatasetInfo follows either way.
    CHECK((hello->n == 0 || hello->n == 2000));
    const auto info = c.next_of<proto::DatasetInfo>();
    REQUIRE(info);
    CHECK(info->n == 2000);
    CHECK(info->d == 6);
    CHECK(info->names.size() == 6);

    const auto f1 = c.next_of<proto::FramePoints>();
    REQUIRE(f1);
    CHECK(f1->colors.size() == 2000);
    const auto f2 = c.next_of<proto::FramePoints>();
    REQUIRE(f2);
    CHECK(f2->frame_id > f1->frame_id);
    const auto lm = c.next_of<proto::FrameLandmarks>();
    REQUIRE(lm);
    CHECK(lm->lo.size() == 512);

    c.send(proto::MoveLandmark{3, 33.0, -4.0, true});
    const auto moved = c.until([](const proto::Message &m) {
        const auto *f = std::get_if<proto::FrameLandmarks>(&m);
        return f && f->lo.size() > 7 && f->lo[6] == 33.f && f->lo[7] == -4.f;
    });
    CHECK(moved);

    c.send(proto::MoveLandmark{9999, 0, 0, false});
    CHECK(c.error_with("unknown_id"));
    c.send(proto::SetParams{.mode = std::string("sideways")});
    CHECK(c.error_with("invalid_mode"));
    c.send(proto::FramePoints{});
    CHECK(c.error_with("unexpected_message"));
    auto bad = proto::encode(proto::AddLandmark{1, 1});
    bad[4] = 0x66;
    c.send_raw(bad);
    CHECK(c.error_with("bad_tag"));

    // graph mode emits edges; connection is still healthy
    c.send(proto::SetParams{.mode = std::string("graph")});
    const auto with_edges = c.until([](const proto::Message &m) {
        const auto *f = std::get_if<proto::FrameLandmarks>(&m);
        return f && !f->edges.empty();
    });
    CHECK(with_edges);
    c.send(proto::DuplicateLandmark{0});
    CHECK(c.until([](const proto::Message &m) {
        const auto *f = std::get_if<proto::FrameLandmarks>(&m);
        return f && f->lo.size() == 514;
    }));

    Client old(server.port());
    old.send(proto::ClientHello{0});
    CHECK(old.error_with("version_mismatch"));

    // second viewer sees the same stream
    Client viewer(server.port());
    viewer.send(proto::ClientHello{});
    CHECK(viewer.next_of<proto::FramePoints>());

    server.stop();
    CHECK(server.ticks() > 0);
    CHECK(!server.fatal_error());
    const auto digest = server.digest();
    CHECK(digest.size() == 64);

    // the recorded session replays to the same frame stream
    const auto script = load_script(*cfg.record_path);
    CHECK(script.total_ticks == std::optional<std::uint64_t>(server.ticks()));
    CHECK(script.digest == std::optional<std::string>(digest));
    const auto r = replay(script);
    CHECK(r.ticks == server.ticks());
    CHECK(r.digest == digest);
    std::filesystem::remove_all(dir);
}

TEST_CASE("server: bind failure, max ticks, dataset load over the wire") {
    const auto dir = fixture::scratch_dir("server2");
    const auto data = fixture::write_gaussians(dir, 500);
    ServerConfig cfg;
    cfg.port = 0;
    cfg.tick_hz = 200;
    Server a(SessionConfig{}, cfg);
    a.start();
    ServerConfig clash = cfg;
    clash.port = a.port();
    Server b(SessionConfig{}, clash);
    CHECK_ERROR_CODE(b.start(), "bind_failed");

    Client c(a.port());
    c.send(proto::ClientHello{});
    const auto hello = c.next_of<proto::ServerHello>();
    REQUIRE(hello);
    CHECK(hello->n == 0);
    c.send(proto::LoadDataset{(dir / "missing.tsv").string(), std::nullopt, std::nullopt});
    CHECK(c.error_with("read_failed"));
    c.send(proto::LoadDataset{data.string(), "tsv", "minmax"});
    const auto info = c.next_of<proto::DatasetInfo>();
    REQUIRE(info);
    CHECK(info->n == 500);
    CHECK(info->max[0] == 1.0);
    CHECK(c.next_of<proto::FramePoints>());
    a.stop();
    a.stop();

    ServerConfig bounded = cfg;
    bounded.max_ticks = 5;
    Server m(SessionConfig{}, bounded);
    m.submit(cmd::LoadDataset{data.string(), std::nullopt, std::nullopt});
    m.start();
    m.wait();
    CHECK(m.ticks() == 5);
    m.stop();
    std::filesystem::remove_all(dir);
}

TEST_CASE("server: a failing submitted command is fatal") {
    ServerConfig cfg;
    cfg.port = 0;
    Server s(SessionConfig{}, cfg);
    s.submit(cmd::LoadDataset{"/nonexistent/file.tsv", std::nullopt, std::nullopt});
    s.start();
    s.wait();
    REQUIRE(s.fatal_error());
    CHECK(s.fatal_error()->find("read_failed") != std::string::npos);
    s.stop();
}
