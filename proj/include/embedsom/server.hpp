#pragma once

#include "embedsom/engine.hpp"
#include "embedsom/protocol.hpp"
#include "embedsom/script.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace embedsom {

struct ServerConfig {
    std::string bind_address = "127.0.0.1";
    std::uint16_t port = 7878;  // 0 picks an ephemeral port
    double tick_hz = 30.0;
    std::optional<std::uint64_t> max_ticks;  // stop after this many ticks
    std::optional<std::filesystem::path> record_path;
};

/// TCP front end for one Session. The engine loop is the only writer of the
/// session; per-connection reader threads feed it decoded control messages
/// and per-connection writer threads drain outgoing frames. Frame messages
/// still queued when a newer one is produced are dropped (frame_id gaps);
/// control messages are never dropped.
class Server {
public:
    Server(SessionConfig session_config, ServerConfig config);
    ~Server();
    Server(const Server &) = delete;
    Server &operator=(const Server &) = delete;

    /// Queues a command as if it came from a client (used for the initial dataset).
    void submit(Command command);

    /// Binds and starts the acceptor and engine threads. Throws `bind_failed`.
    void start();
    /// Bound port (after `start`).
    std::uint16_t port() const noexcept { return bound_port_; }
    /// Asks the engine loop to exit without joining; safe from any thread.
    void request_stop() noexcept;
    /// Requests shutdown and joins every thread. Idempotent.
    void stop();
    /// Blocks until the engine loop exits (shutdown command, max_ticks or stop).
    void wait();

    std::uint64_t ticks() const noexcept { return ticks_.load(); }
    /// Digest of every FramePoints payload the engine produced (before drops);
    /// available once the engine loop has exited.
    std::string digest() const;
    /// Set when a submitted (non-client) command failed; the engine stops.
    std::optional<std::string> fatal_error() const;

private:
    struct Outgoing {
        std::vector<std::uint8_t> bytes;
        bool frame = false;
        proto::Tag tag{};
        bool close_after = false;  // writer closes the connection once sent
    };
    struct Connection {
        int fd = -1;
        std::uint64_t id = 0;
        std::mutex mu;
        std::condition_variable cv;
        std::deque<Outgoing> out;
        bool closed = false;
        std::atomic<bool> hello{false};
        std::atomic<bool> websocket{false};
        std::thread reader;
        std::thread writer;
    };
    struct Inbound {
        std::uint64_t conn = 0;
        proto::Message message;
    };

    void accept_loop();
    void reader_loop(std::shared_ptr<Connection> c);
    void writer_loop(std::shared_ptr<Connection> c);
    void engine_loop();

    void handle_message(Connection &c, proto::Message m);
    void send_raw(Connection &c, std::vector<std::uint8_t> bytes, bool close_after = false);
    void send_to(Connection &c, const proto::Message &m, bool frame);
    void send_to(std::uint64_t conn, const proto::Message &m);
    void broadcast(const proto::Message &m, bool frame);
    void close_connection(Connection &c);
    void reap_connections();
    std::optional<Command> translate(const Inbound &in);
    void apply_command(std::uint64_t conn, Command command);
    void after_dataset_change();

    Session session_;
    ServerConfig config_;
    std::unique_ptr<ScriptRecorder> recorder_;
    proto::FrameDigest digest_;
    std::string final_digest_;

    int listen_fd_ = -1;
    std::uint16_t bound_port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> ticks_{0};
    std::thread acceptor_;
    std::thread engine_;
    std::mutex join_mu_;
    bool joined_ = false;

    std::mutex conns_mu_;
    std::vector<std::shared_ptr<Connection>> conns_;
    std::uint64_t next_conn_id_ = 1;

    std::mutex inbound_mu_;
    std::condition_variable inbound_cv_;
    std::deque<Inbound> inbound_;
    std::deque<Command> submitted_;

    mutable std::mutex hello_mu_;
    proto::ServerHello hello_;
    std::optional<proto::DatasetInfo> info_;
    bool engine_done_ = false;
    std::optional<std::string> fatal_;
    std::condition_variable done_cv_;
    mutable std::mutex done_mu_;
};

}  // namespace embedsom
