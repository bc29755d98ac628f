#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Server side of the WebSocket binary channel: the opening handshake and
// frame (de)serialization. Protocol messages travel as binary payloads; the
// concatenated payload bytes form the same stream a raw TCP client sends.
namespace embedsom::ws {

enum class Opcode : std::uint8_t { Continuation = 0x0, Text = 0x1, Binary = 0x2, Close = 0x8, Ping = 0x9, Pong = 0xA };

inline constexpr std::size_t kMaxHandshakeBytes = 8192;

/// Sec-WebSocket-Accept value for a client's Sec-WebSocket-Key.
std::string accept_key(std::string_view client_key);

/// True when `prefix` could begin an HTTP upgrade request rather than a
/// length-prefixed protocol message.
bool looks_like_http(std::span<const std::uint8_t> prefix) noexcept;

struct HandshakeOk {
    std::string response;  // full "101 Switching Protocols" reply
};
struct HandshakeError {
    std::string status;    // e.g. "400 Bad Request"
    std::string response;  // full HTTP reply to send before closing
};

/// Validates one complete request head (through the blank line).
std::variant<HandshakeOk, HandshakeError> handshake(std::string_view request_head);

/// Server-to-client frames are never masked.
std::vector<std::uint8_t> encode_frame(Opcode op, std::span<const std::uint8_t> payload, bool fin = true);

/// Client-side encoding (masked), used by tests and tools.
std::vector<std::uint8_t> encode_client_frame(Opcode op, std::span<const std::uint8_t> payload,
                                              std::uint32_t mask_key, bool fin = true);

struct Message {
    Opcode opcode;  // Binary, Text, Close, Ping or Pong; fragments are joined
    std::vector<std::uint8_t> payload;
};

/// Close status and reason for a protocol violation.
struct Violation {
    std::uint16_t status;
    std::string reason;
};

/// Incremental decoder of client frames. Enforces masking, control-frame
/// rules and a maximum message size. After a violation it stays failed.
class FrameDecoder {
public:
    explicit FrameDecoder(std::size_t max_message = std::size_t{1} << 28) : max_message_(max_message) {}

    void feed(std::span<const std::uint8_t> bytes);
    /// Next complete message, a violation, or nothing when more bytes are needed.
    std::optional<std::variant<Message, Violation>> next();
    bool failed() const noexcept { return failed_; }

private:
    std::size_t max_message_;
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::optional<Opcode> fragment_op_;
    std::vector<std::uint8_t> fragment_;
    bool failed_ = false;
};

/// Close frame body: 16-bit status then UTF-8 reason.
std::vector<std::uint8_t> close_payload(std::uint16_t status, std::string_view reason);

}  // namespace embedsom::ws
