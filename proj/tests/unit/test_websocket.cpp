#include "doctest.h"
#include "fixtures.hpp"

#include "embedsom/protocol.hpp"
#include "embedsom/server.hpp"
#include "embedsom/websocket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <thread>

using namespace embedsom;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

const std::string kUpgrade = "GET /session HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\n"
                             "Connection: keep-alive, Upgrade\r\nSec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\n"
                             "Sec-WebSocket-Version: 13\r\n\r\n";

ws::Message expect_message(ws::FrameDecoder &d) {
    auto f = d.next();
    REQUIRE(f);
    REQUIRE(std::holds_alternative<ws::Message>(*f));
    return std::get<ws::Message>(*f);
}

ws::Violation expect_violation(ws::FrameDecoder &d) {
    auto f = d.next();
    REQUIRE(f);
    REQUIRE(std::holds_alternative<ws::Violation>(*f));
    return std::get<ws::Violation>(*f);
}

/// Minimal client over a raw socket; parses unmasked server frames itself.
class WsClient {
public:
    explicit WsClient(std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
        REQUIRE(::connect(fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) == 0);
        timeval tv{0, 200000};
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    }
    ~WsClient() { ::close(fd_); }

    void send(const std::vector<std::uint8_t> &b) {
        REQUIRE(::send(fd_, b.data(), b.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(b.size()));
    }

    /// Reads until the HTTP response head is complete; leftover bytes stay buffered.
    std::string response_head() {
        const auto deadline = std::chrono::steady_clock::now() + 10s;
        for (;;) {
            const std::string_view s(reinterpret_cast<const char *>(buf_.data()), buf_.size());
            if (auto end = s.find("\r\n\r\n"); end != std::string_view::npos) {
                std::string head(s.substr(0, end + 4));
                buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(end + 4));
                return head;
            }
            if (std::chrono::steady_clock::now() > deadline || !fill())
                return std::string(s);
        }
    }

    struct Frame {
        std::uint8_t first;
        std::vector<std::uint8_t> payload;
    };
    std::optional<Frame> frame() {
        const auto deadline = std::chrono::steady_clock::now() + 10s;
        for (;;) {
            if (buf_.size() >= 2) {
                REQUIRE((buf_[1] & 0x80) == 0);  // server frames are unmasked
                std::uint64_t len = buf_[1] & 0x7F;
                std::size_t h = 2;
                if (len == 126 && buf_.size() >= 4) {
                    len = (std::uint64_t{buf_[2]} << 8) | buf_[3];
                    h = 4;
                } else if (len == 127 && buf_.size() >= 10) {
                    len = 0;
                    for (int i = 0; i < 8; ++i)
                        len = (len << 8) | buf_[2 + i];
                    h = 10;
                }
                if ((len < 126 || h > 2) && buf_.size() >= h + len) {
                    Frame f{buf_[0], {buf_.begin() + static_cast<std::ptrdiff_t>(h),
                                      buf_.begin() + static_cast<std::ptrdiff_t>(h + len)}};
                    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(h + len));
                    return f;
                }
            }
            if (std::chrono::steady_clock::now() > deadline || !fill())
                return std::nullopt;
        }
    }

    /// Next protocol message of type T carried in binary frames.
    template <typename T>
    std::optional<T> next_of() {
        for (int i = 0; i < 10000; ++i) {
            while (auto m = decoder_.next())
                if (auto *t = std::get_if<T>(&*m))
                    return *t;
            auto f = frame();
            if (!f)
                return std::nullopt;
            REQUIRE((f->first & 0x0F) == 0x2);
            REQUIRE((f->first & 0x80) != 0);
            // Each server frame carries exactly one whole protocol message.
            REQUIRE(f->payload.size() >= 5);
            const std::uint32_t len = f->payload[0] | (f->payload[1] << 8) | (f->payload[2] << 16) |
                                      (std::uint32_t{f->payload[3]} << 24);
            REQUIRE(len == f->payload.size() - 4);
            decoder_.feed(f->payload);
        }
        return std::nullopt;
    }

private:
    bool fill() {
        std::uint8_t tmp[65536];
        const ssize_t r = ::recv(fd_, tmp, sizeof tmp, 0);
        if (r == 0)
            return false;
        if (r > 0)
            buf_.insert(buf_.end(), tmp, tmp + r);
        return true;
    }

    int fd_ = -1;
    std::vector<std::uint8_t> buf_;
    proto::StreamDecoder decoder_;
};

}  // namespace

TEST_CASE("websocket: accept key matches the published example") {
    CHECK(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST_CASE("websocket: handshake validation") {
    auto ok = ws::handshake(kUpgrade);
    REQUIRE(std::holds_alternative<ws::HandshakeOk>(ok));
    const auto &resp = std::get<ws::HandshakeOk>(ok).response;
    CHECK(resp.starts_with("HTTP/1.1 101 Switching Protocols\r\n"));
    CHECK(resp.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=\r\n") != std::string::npos);
    CHECK(resp.ends_with("\r\n\r\n"));

    auto status = [](std::string req) {
        auto r = ws::handshake(req);
        return std::holds_alternative<ws::HandshakeError>(r) ? std::get<ws::HandshakeError>(r).status : "101";
    };
    CHECK(status("GET / HTTP/1.1\r\nHost: x\r\n\r\n") == "426 Upgrade Required");
    CHECK(status("POST / HTTP/1.1\r\n\r\n") == "400 Bad Request");
    std::string v8 = kUpgrade;
    v8.replace(v8.find("Version: 13"), 11, "Version: 8");
    CHECK(status(v8) == "426 Upgrade Required");
    CHECK(std::get<ws::HandshakeError>(ws::handshake(v8)).response.find("Sec-WebSocket-Version: 13") !=
          std::string::npos);
    std::string nokey = kUpgrade;
    nokey.erase(nokey.find("Sec-WebSocket-Key"), nokey.find("Sec-WebSocket-Version") - nokey.find("Sec-WebSocket-Key"));
    CHECK(status(nokey) == "400 Bad Request");
    std::string mixed = kUpgrade;
    mixed.replace(mixed.find("Upgrade: websocket"), 18, "upgrade: WebSocket");
    CHECK(status(mixed) == "101");
}

TEST_CASE("websocket: detection of an HTTP request versus a raw protocol prefix") {
    CHECK(ws::looks_like_http(bytes_of("GET /")));
    CHECK(ws::looks_like_http(bytes_of("GE")));
    CHECK_FALSE(ws::looks_like_http(bytes_of("POST")));
    CHECK_FALSE(ws::looks_like_http(proto::encode(proto::ClientHello{})));
}

TEST_CASE("websocket: frame header length boundaries") {
    for (std::size_t n : {0, 1, 125, 126, 65535, 65536, 70000}) {
        const std::vector<std::uint8_t> payload(n, 0xAB);
        const auto f = ws::encode_frame(ws::Opcode::Binary, payload);
        const std::size_t header = n < 126 ? 2 : n <= 65535 ? 4 : 10;
        REQUIRE(f.size() == header + n);
        CHECK(f[0] == 0x82);
        CHECK((f[1] & 0x80) == 0);
        const auto c = ws::encode_client_frame(ws::Opcode::Binary, payload, 0x01020304);
        REQUIRE(c.size() == header + 4 + n);
        ws::FrameDecoder d;
        d.feed(c);
        const auto m = expect_message(d);
        CHECK(m.opcode == ws::Opcode::Binary);
        CHECK(m.payload == payload);
        CHECK_FALSE(d.next());
    }
}

TEST_CASE("websocket: masking matches the published example") {
    // "Hello" masked with 37 fa 21 3d.
    const std::vector<std::uint8_t> expected{0x81, 0x85, 0x37, 0xfa, 0x21, 0x3d, 0x7f, 0x9f, 0x4d, 0x51, 0x58};
    CHECK(ws::encode_client_frame(ws::Opcode::Text, bytes_of("Hello"), 0x37fa213d) == expected);
    CHECK(ws::encode_frame(ws::Opcode::Text, bytes_of("Hello")) ==
          std::vector<std::uint8_t>{0x81, 0x05, 0x48, 0x65, 0x6c, 0x6c, 0x6f});
}

TEST_CASE("websocket: fragments, interleaved control frames and drip feeding") {
    std::vector<std::uint8_t> stream;
    auto put = [&](std::vector<std::uint8_t> f) { stream.insert(stream.end(), f.begin(), f.end()); };
    put(ws::encode_client_frame(ws::Opcode::Binary, bytes_of("abc"), 7, false));
    put(ws::encode_client_frame(ws::Opcode::Ping, bytes_of("p"), 8));
    put(ws::encode_client_frame(ws::Opcode::Continuation, bytes_of("de"), 9, false));
    put(ws::encode_client_frame(ws::Opcode::Continuation, bytes_of("f"), 10, true));
    put(ws::encode_client_frame(ws::Opcode::Close, ws::close_payload(1000, "bye"), 11));

    ws::FrameDecoder d;
    std::vector<ws::Message> got;
    for (std::uint8_t b : stream) {
        d.feed(std::span<const std::uint8_t>(&b, 1));
        while (auto f = d.next()) {
            REQUIRE(std::holds_alternative<ws::Message>(*f));
            got.push_back(std::get<ws::Message>(*f));
        }
    }
    REQUIRE(got.size() == 3);
    CHECK(got[0].opcode == ws::Opcode::Ping);
    CHECK(got[0].payload == bytes_of("p"));
    CHECK(got[1].opcode == ws::Opcode::Binary);
    CHECK(got[1].payload == bytes_of("abcdef"));
    CHECK(got[2].opcode == ws::Opcode::Close);
    CHECK(got[2].payload == ws::close_payload(1000, "bye"));
}

TEST_CASE("websocket: protocol violations") {
    auto violation_for = [](std::vector<std::uint8_t> bytes, std::size_t max = 1 << 20) {
        ws::FrameDecoder d(max);
        d.feed(bytes);
        const auto v = expect_violation(d);
        CHECK(d.failed());
        CHECK_FALSE(d.next());
        return v.status;
    };
    CHECK(violation_for(ws::encode_frame(ws::Opcode::Binary, bytes_of("x"))) == 1002);  // unmasked
    auto reserved = ws::encode_client_frame(ws::Opcode::Binary, bytes_of("x"), 1);
    reserved[0] |= 0x40;
    CHECK(violation_for(reserved) == 1002);
    CHECK(violation_for(ws::encode_client_frame(ws::Opcode::Ping, std::vector<std::uint8_t>(126, 0), 1)) == 1002);
    CHECK(violation_for(ws::encode_client_frame(ws::Opcode::Ping, bytes_of("x"), 1, false)) == 1002);
    CHECK(violation_for(ws::encode_client_frame(ws::Opcode::Continuation, bytes_of("x"), 1)) == 1002);
    auto unknown = ws::encode_client_frame(ws::Opcode::Binary, bytes_of("x"), 1);
    unknown[0] = 0x83;
    CHECK(violation_for(unknown) == 1002);
    CHECK(violation_for(ws::encode_client_frame(ws::Opcode::Binary, std::vector<std::uint8_t>(200, 0), 1), 100) ==
          1009);
    std::vector<std::uint8_t> two = ws::encode_client_frame(ws::Opcode::Binary, bytes_of("a"), 1, false);
    const auto second = ws::encode_client_frame(ws::Opcode::Binary, bytes_of("b"), 1);
    two.insert(two.end(), second.begin(), second.end());
    CHECK(violation_for(two) == 1002);
}

TEST_CASE("server: websocket clients speak the same protocol as raw TCP clients") {
    const auto dir = fixture::scratch_dir("server_ws");
    const auto data = fixture::write_gaussians(dir, 500);
    SessionConfig sc;
    sc.seed = 4;
    ServerConfig cfg;
    cfg.port = 0;
    cfg.tick_hz = 100;
    Server server(sc, cfg);
    server.submit(cmd::LoadDataset{data.string(), std::nullopt, std::nullopt});
    server.start();

    {
        WsClient c(server.port());
        // Handshake split across writes; the first protocol frame rides in the same segment.
        c.send(bytes_of(std::string_view(kUpgrade).substr(0, 10)));
        std::this_thread::sleep_for(20ms);
        auto rest = bytes_of(std::string_view(kUpgrade).substr(10));
        const auto hello = proto::encode(proto::ClientHello{});
        // One protocol message split over two WebSocket messages.
        const auto f1 = ws::encode_client_frame(ws::Opcode::Binary, std::span(hello).first(3), 0xA1B2C3D4);
        const auto f2 = ws::encode_client_frame(ws::Opcode::Binary, std::span(hello).subspan(3), 0x0badf00d);
        rest.insert(rest.end(), f1.begin(), f1.end());
        c.send(rest);
        const auto head = c.response_head();
        CHECK(head.starts_with("HTTP/1.1 101 Switching Protocols\r\n"));
        CHECK(head.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo=") != std::string::npos);
        c.send(f2);
        REQUIRE(c.next_of<proto::ServerHello>());
        const auto info = c.next_of<proto::DatasetInfo>();
        REQUIRE(info);
        CHECK(info->n == 500);
        const auto fp = c.next_of<proto::FramePoints>();
        REQUIRE(fp);
        CHECK(fp->colors.size() == 500);
        const auto fl = c.next_of<proto::FrameLandmarks>();
        REQUIRE(fl);
        CHECK(fl->lo.size() == 2 * 256);

        // Commands and errors over the channel.
        c.send(ws::encode_client_frame(ws::Opcode::Binary, proto::encode(proto::RemoveLandmark{9999}), 5));
        bool saw_error = false;
        for (int i = 0; i < 200 && !saw_error; ++i) {
            auto e = c.next_of<proto::ErrorMessage>();
            REQUIRE(e);
            saw_error = e->code == "unknown_id";
        }
        CHECK(saw_error);

        // Ping is answered with a pong carrying the same payload.
        c.send(ws::encode_client_frame(ws::Opcode::Ping, bytes_of("hi"), 6));
        bool pong = false;
        for (int i = 0; i < 500 && !pong; ++i) {
            auto f = c.frame();
            REQUIRE(f);
            pong = (f->first & 0x0F) == 0xA && f->payload == bytes_of("hi");
        }
        CHECK(pong);

        // Text messages are refused with close status 1003.
        c.send(ws::encode_client_frame(ws::Opcode::Text, bytes_of("{}"), 7));
        std::optional<WsClient::Frame> close;
        for (int i = 0; i < 500; ++i) {
            auto f = c.frame();
            REQUIRE(f);
            if ((f->first & 0x0F) == 0x8) {
                close = f;
                break;
            }
        }
        REQUIRE(close);
        REQUIRE(close->payload.size() >= 2);
        CHECK(((close->payload[0] << 8) | close->payload[1]) == 1003);
        CHECK_FALSE(c.frame());  // then the server hangs up
    }
    {
        WsClient c(server.port());
        c.send(bytes_of("GET / HTTP/1.1\r\nHost: localhost\r\n\r\n"));
        CHECK(c.response_head().starts_with("HTTP/1.1 426 Upgrade Required\r\n"));
    }
    {
        // Unmasked client frames violate the channel rules: close 1002.
        WsClient c(server.port());
        c.send(bytes_of(kUpgrade));
        CHECK(c.response_head().starts_with("HTTP/1.1 101"));
        c.send(ws::encode_frame(ws::Opcode::Binary, proto::encode(proto::ClientHello{})));
        const auto f = c.frame();
        REQUIRE(f);
        CHECK((f->first & 0x0F) == 0x8);
        CHECK(((f->payload[0] << 8) | f->payload[1]) == 1002);
    }
    server.stop();
}
