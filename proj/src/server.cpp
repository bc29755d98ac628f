#include "embedsom/server.hpp"

#include "embedsom/io.hpp"
#include "embedsom/websocket.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace embedsom {

Server::Server(SessionConfig session_config, ServerConfig config)
    : session_(session_config), config_(std::move(config)) {
    if (!(config_.tick_hz > 0))
        throw Error(ErrorKind::Parameter, "invalid_rate", "tick rate must be positive");
    if (config_.record_path)
        recorder_ = std::make_unique<ScriptRecorder>(session_config);
}

Server::~Server() { stop(); }

void Server::submit(Command command) {
    {
        std::lock_guard lk(inbound_mu_);
        submitted_.push_back(std::move(command));
    }
    inbound_cv_.notify_all();
}

void Server::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0)
        throw Error(ErrorKind::Io, "bind_failed", std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(config_.port);
    if (::inet_pton(AF_INET, config_.bind_address.c_str(), &addr.sin_addr) != 1) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(ErrorKind::Parameter, "bind_failed", "bad bind address '" + config_.bind_address + "'");
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr *>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(ErrorKind::Io, "bind_failed",
                    "cannot listen on " + config_.bind_address + ":" + std::to_string(config_.port) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr *>(&addr), &len);
    bound_port_ = ntohs(addr.sin_port);
    engine_ = std::thread([this] { engine_loop(); });
    acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::request_stop() noexcept {
    stopping_ = true;
    inbound_cv_.notify_all();
}

void Server::stop() {
    std::lock_guard jl(join_mu_);
    if (joined_)
        return;
    joined_ = true;
    request_stop();
    if (listen_fd_ >= 0)
        ::shutdown(listen_fd_, SHUT_RDWR);
    if (engine_.joinable())
        engine_.join();
    if (acceptor_.joinable())
        acceptor_.join();
    if (listen_fd_ >= 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
    }
    std::vector<std::shared_ptr<Connection>> conns;
    {
        std::lock_guard lk(conns_mu_);
        conns.swap(conns_);
    }
    for (auto &c : conns) {
        close_connection(*c);
        if (c->reader.joinable())
            c->reader.join();
        if (c->writer.joinable())
            c->writer.join();
        ::close(c->fd);
    }
}

void Server::wait() {
    std::unique_lock lk(done_mu_);
    done_cv_.wait(lk, [this] { return engine_done_; });
}

std::string Server::digest() const {
    std::lock_guard lk(done_mu_);
    return final_digest_;
}

std::optional<std::string> Server::fatal_error() const {
    std::lock_guard lk(done_mu_);
    return fatal_;
}

// ---- connections ----------------------------------------------------------

void Server::accept_loop() {
    while (!stopping_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (stopping_ || (errno != EINTR && errno != ECONNABORTED))
                break;
            continue;
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        auto c = std::make_shared<Connection>();
        c->fd = fd;
        std::lock_guard lk(conns_mu_);
        if (stopping_) {
            ::close(fd);
            break;
        }
        c->id = next_conn_id_++;
        c->writer = std::thread([this, c] { writer_loop(c); });
        c->reader = std::thread([this, c] { reader_loop(c); });
        conns_.push_back(std::move(c));
    }
}

void Server::close_connection(Connection &c) {
    {
        std::lock_guard lk(c.mu);
        if (!c.closed) {
            c.closed = true;
            ::shutdown(c.fd, SHUT_RDWR);
        }
    }
    c.cv.notify_all();
}

void Server::reap_connections() {
    std::vector<std::shared_ptr<Connection>> dead;
    {
        std::lock_guard lk(conns_mu_);
        for (auto it = conns_.begin(); it != conns_.end();) {
            bool closed;
            {
                std::lock_guard cl((*it)->mu);
                closed = (*it)->closed;
            }
            if (closed) {
                dead.push_back(*it);
                it = conns_.erase(it);
            } else {
                ++it;
            }
        }
    }
    for (auto &c : dead) {
        c->reader.join();
        c->writer.join();
        ::close(c->fd);
    }
}

void Server::send_to(Connection &c, const proto::Message &m, bool frame) {
    Outgoing o{proto::encode(m), frame, proto::tag_of(m)};
    if (c.websocket)
        o.bytes = ws::encode_frame(ws::Opcode::Binary, o.bytes);
    {
        std::lock_guard lk(c.mu);
        if (c.closed)
            return;
        if (frame) {
            // a newer frame supersedes any queued one of the same kind
            for (auto it = c.out.begin(); it != c.out.end();)
                it = (it->frame && it->tag == o.tag) ? c.out.erase(it) : std::next(it);
        }
        c.out.push_back(std::move(o));
    }
    c.cv.notify_one();
}

void Server::send_to(std::uint64_t conn, const proto::Message &m) {
    std::shared_ptr<Connection> target;
    {
        std::lock_guard lk(conns_mu_);
        for (auto &c : conns_)
            if (c->id == conn)
                target = c;
    }
    if (target)
        send_to(*target, m, false);
}

void Server::broadcast(const proto::Message &m, bool frame) {
    std::vector<std::shared_ptr<Connection>> targets;
    {
        std::lock_guard lk(conns_mu_);
        for (auto &c : conns_)
            if (c->hello)
                targets.push_back(c);
    }
    for (auto &c : targets)
        send_to(*c, m, frame);
}

void Server::writer_loop(std::shared_ptr<Connection> c) {
    for (;;) {
        Outgoing o;
        {
            std::unique_lock lk(c->mu);
            c->cv.wait(lk, [&] { return c->closed || !c->out.empty(); });
            if (c->closed)
                return;
            o = std::move(c->out.front());
            c->out.pop_front();
        }
        std::size_t sent = 0;
        while (sent < o.bytes.size()) {
            const ssize_t r = ::send(c->fd, o.bytes.data() + sent, o.bytes.size() - sent, MSG_NOSIGNAL);
            if (r < 0 && errno == EINTR)
                continue;
            if (r <= 0) {
                close_connection(*c);
                return;
            }
            sent += static_cast<std::size_t>(r);
        }
        if (o.close_after) {
            close_connection(*c);
            return;
        }
    }
}

void Server::send_raw(Connection &c, std::vector<std::uint8_t> bytes, bool close_after) {
    {
        std::lock_guard lk(c.mu);
        if (c.closed)
            return;
        c.out.push_back(Outgoing{std::move(bytes), false, proto::Tag{}, close_after});
    }
    c.cv.notify_one();
}

void Server::handle_message(Connection &c, proto::Message m) {
    if (std::holds_alternative<proto::ErrorMessage>(m)) {
        send_to(c, m, false);
        return;
    }
    if (const auto *h = std::get_if<proto::ClientHello>(&m)) {
        if (h->protocol_version != proto::kProtocolVersion) {
            send_to(c,
                    proto::ErrorMessage{"version_mismatch",
                                        "server speaks protocol " + std::to_string(proto::kProtocolVersion)},
                    false);
            return;
        }
        proto::ServerHello hello;
        std::optional<proto::DatasetInfo> info;
        {
            std::lock_guard lk(hello_mu_);
            hello = hello_;
            info = info_;
        }
        send_to(c, hello, false);
        if (info)
            send_to(c, *info, false);
        c.hello = true;
        return;
    }
    if (!c.hello) {
        send_to(c, proto::ErrorMessage{"hello_required", "send ClientHello first"}, false);
        return;
    }
    const auto tag = proto::tag_of(m);
    if (tag == proto::Tag::ServerHello || tag == proto::Tag::DatasetInfo || tag == proto::Tag::FramePoints ||
        tag == proto::Tag::FrameLandmarks) {
        send_to(c, proto::ErrorMessage{"unexpected_message", "server-to-client message sent by client"}, false);
        return;
    }
    {
        std::lock_guard lk(inbound_mu_);
        inbound_.push_back({c.id, std::move(m)});
    }
    inbound_cv_.notify_all();
}

void Server::reader_loop(std::shared_ptr<Connection> c) {
    proto::StreamDecoder decoder;
    std::optional<ws::FrameDecoder> frames;
    // Bytes seen before the transport is known: raw protocol or HTTP upgrade.
    std::vector<std::uint8_t> head;
    bool decided = false;
    std::vector<std::uint8_t> buf(1 << 16);

    // Returns false once the connection is being closed by this side.
    auto on_bytes = [&](std::span<const std::uint8_t> bytes) {
        if (!frames) {
            decoder.feed(bytes);
        } else {
            frames->feed(bytes);
            while (auto f = frames->next()) {
                if (const auto *v = std::get_if<ws::Violation>(&*f)) {
                    send_raw(*c, ws::encode_frame(ws::Opcode::Close, ws::close_payload(v->status, v->reason)), true);
                    return false;
                }
                auto &msg = std::get<ws::Message>(*f);
                switch (msg.opcode) {
                case ws::Opcode::Binary: decoder.feed(msg.payload); break;
                case ws::Opcode::Ping: send_raw(*c, ws::encode_frame(ws::Opcode::Pong, msg.payload)); break;
                case ws::Opcode::Pong: break;
                case ws::Opcode::Close: {
                    std::vector<std::uint8_t> echo(msg.payload.begin(),
                                                   msg.payload.begin() + std::min<std::size_t>(2, msg.payload.size()));
                    send_raw(*c, ws::encode_frame(ws::Opcode::Close, echo), true);
                    return false;
                }
                default:
                    send_raw(*c,
                             ws::encode_frame(ws::Opcode::Close, ws::close_payload(1003, "binary messages only")),
                             true);
                    return false;
                }
            }
        }
        while (auto m = decoder.next())
            handle_message(*c, std::move(*m));
        return true;
    };

    for (;;) {
        const ssize_t r = ::recv(c->fd, buf.data(), buf.size(), 0);
        if (r < 0 && errno == EINTR)
            continue;
        if (r <= 0)
            break;
        const std::span<const std::uint8_t> chunk{buf.data(), static_cast<std::size_t>(r)};
        if (decided) {
            if (!on_bytes(chunk))
                return;
            continue;
        }
        head.insert(head.end(), chunk.begin(), chunk.end());
        if (!ws::looks_like_http(head)) {
            decided = true;
            if (!on_bytes(head))
                return;
            continue;
        }
        const std::string_view text(reinterpret_cast<const char *>(head.data()), head.size());
        const std::size_t end = text.find("\r\n\r\n");
        if (end == std::string_view::npos) {
            if (head.size() > ws::kMaxHandshakeBytes) {
                const std::string_view resp = "HTTP/1.1 431 Request Header Fields Too Large\r\nConnection: close\r\n\r\n";
                send_raw(*c, {resp.begin(), resp.end()}, true);
                return;
            }
            continue;
        }
        auto result = ws::handshake(text.substr(0, end + 4));
        if (auto *bad = std::get_if<ws::HandshakeError>(&result)) {
            send_raw(*c, {bad->response.begin(), bad->response.end()}, true);
            return;
        }
        const auto &ok = std::get<ws::HandshakeOk>(result);
        send_raw(*c, {ok.response.begin(), ok.response.end()});
        c->websocket = true;
        frames.emplace(proto::kMaxMessageLength);
        decided = true;
        if (!on_bytes(std::span<const std::uint8_t>(head).subspan(end + 4)))
            return;
    }
    close_connection(*c);
}

// ---- engine ---------------------------------------------------------------

std::optional<Command> Server::translate(const Inbound &in) {
    auto resolve = [&](std::uint32_t row) -> std::optional<LandmarkId> {
        auto id = session_.frame_landmark_id(row);
        if (!id)
            send_to(in.conn, proto::ErrorMessage{"unknown_id", "no landmark at index " + std::to_string(row) +
                                                                   " in the last frame"});
        return id;
    };
    try {
        return std::visit(
            [&](const auto &m) -> std::optional<Command> {
                using T = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<T, proto::LoadDataset>) {
                    cmd::LoadDataset c{m.path, std::nullopt, std::nullopt};
                    if (m.format)
                        c.format = parse_format(*m.format);
                    if (m.transform)
                        c.transform = parse_transform_kind(*m.transform);
                    return c;
                } else if constexpr (std::is_same_v<T, proto::SetParams>) {
                    cmd::SetParams c;
                    c.k = m.k;
                    if (m.mode)
                        c.mode = parse_mode(*m.mode);
                    c.sigma = m.sigma;
                    c.alpha = m.alpha;
                    c.alpha_km = m.alpha_km;
                    c.k_graph = m.k_g;
                    c.paused = m.paused;
                    c.color_dim = m.color_dim;
                    return c;
                } else if constexpr (std::is_same_v<T, proto::MoveLandmark>) {
                    if (auto id = resolve(m.id))
                        return cmd::MoveLandmark{*id, m.x, m.y, m.pinned};
                    return std::nullopt;
                } else if constexpr (std::is_same_v<T, proto::AddLandmark>) {
                    return cmd::AddLandmark{m.x, m.y};
                } else if constexpr (std::is_same_v<T, proto::DuplicateLandmark>) {
                    if (auto id = resolve(m.id))
                        return cmd::DuplicateLandmark{*id};
                    return std::nullopt;
                } else if constexpr (std::is_same_v<T, proto::RemoveLandmark>) {
                    if (auto id = resolve(m.id))
                        return cmd::RemoveLandmark{*id};
                    return std::nullopt;
                } else {
                    return std::nullopt;
                }
            },
            in.message);
    } catch (const Error &e) {
        send_to(in.conn, proto::ErrorMessage{e.code(), e.what()});
        return std::nullopt;
    }
}

void Server::after_dataset_change() {
    const Dataset &data = session_.dataset();
    auto info = proto::make_dataset_info(data);
    {
        std::lock_guard lk(hello_mu_);
        hello_ = proto::make_server_hello(data);
        info_ = info;
    }
    broadcast(info, false);
}

void Server::apply_command(std::uint64_t conn, Command command) {
    if (recorder_)
        recorder_->record(ticks_.load(), command);
    const bool is_load = std::holds_alternative<cmd::LoadDataset>(command);
    try {
        session_.apply(command);
        if (is_load)
            after_dataset_change();
    } catch (const Error &e) {
        const proto::ErrorMessage err{e.code(), e.what()};
        if (conn == 0) {
            {
                std::lock_guard lk(done_mu_);
                fatal_ = std::string(e.code()) + ": " + e.what();
            }
            request_stop();
        } else
            send_to(conn, err);
    }
}

void Server::engine_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / config_.tick_hz));
    auto next = clock::now();
    while (!stopping_) {
        std::deque<Inbound> inbound;
        std::deque<Command> submitted;
        {
            std::lock_guard lk(inbound_mu_);
            inbound.swap(inbound_);
            submitted.swap(submitted_);
        }
        for (auto &c : submitted)
            apply_command(0, std::move(c));
        for (auto &in : inbound)
            if (auto c = translate(in))
                apply_command(in.conn, std::move(*c));
        if (session_.shutdown_requested())
            break;

        if (session_.has_model()) {
            TickResult r = session_.tick();
            digest_.add(r.frame);
            ++ticks_;
            broadcast(proto::to_frame_landmarks(r.frame), true);
            broadcast(proto::to_frame_points(r.frame), true);
            if (config_.max_ticks && ticks_ >= *config_.max_ticks)
                break;
        }
        reap_connections();

        next += period;
        const auto now = clock::now();
        if (now > next + period)
            next = now;  // fell behind: skip, never spin to catch up
        std::unique_lock lk(inbound_mu_);
        inbound_cv_.wait_until(lk, next, [this] { return stopping_.load(); });
    }

    const std::string hex = digest_.hex();
    if (recorder_) {
        recorder_->finish(ticks_.load(), hex);
        try {
            write_file(*config_.record_path, write_script(recorder_->script()));
        } catch (const Error &e) {
            std::lock_guard lk(done_mu_);
            if (!fatal_)
                fatal_ = std::string(e.code()) + ": " + e.what();
        }
    }
    {
        std::lock_guard lk(done_mu_);
        final_digest_ = hex;
        engine_done_ = true;
    }
    done_cv_.notify_all();
}

}  // namespace embedsom
