#include "embedsom/websocket.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>

namespace embedsom::ws {

namespace {

constexpr std::string_view kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

bool has_token(std::string_view list, std::string_view token) {
    const std::string l = lower(list);
    std::size_t start = 0;
    while (start <= l.size()) {
        const std::size_t comma = std::min(l.find(',', start), l.size());
        if (trim(std::string_view(l).substr(start, comma - start)) == token)
            return true;
        start = comma + 1;
    }
    return false;
}

HandshakeError reject(std::string status, std::string_view why) {
    std::string body(why);
    std::string resp = "HTTP/1.1 " + status + "\r\nContent-Type: text/plain\r\nContent-Length: " +
                       std::to_string(body.size()) + "\r\nConnection: close\r\n\r\n" + body;
    return {std::move(status), std::move(resp)};
}

void put_header(std::vector<std::uint8_t> &out, Opcode op, std::size_t len, bool fin, bool masked) {
    out.push_back(static_cast<std::uint8_t>((fin ? 0x80 : 0) | static_cast<std::uint8_t>(op)));
    const std::uint8_t mask_bit = masked ? 0x80 : 0;
    if (len < 126) {
        out.push_back(static_cast<std::uint8_t>(mask_bit | len));
    } else if (len <= 0xFFFF) {
        out.push_back(mask_bit | 126);
        out.push_back(static_cast<std::uint8_t>(len >> 8));
        out.push_back(static_cast<std::uint8_t>(len));
    } else {
        out.push_back(mask_bit | 127);
        for (int s = 56; s >= 0; s -= 8)
            out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(len) >> s));
    }
}

bool is_control(Opcode op) { return static_cast<std::uint8_t>(op) & 0x8; }

}  // namespace

std::string accept_key(std::string_view client_key) {
    const std::string input = std::string(client_key) + std::string(kGuid);
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char *>(input.data()), input.size(), digest);
    unsigned char b64[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
    const int n = EVP_EncodeBlock(b64, digest, SHA_DIGEST_LENGTH);
    return std::string(reinterpret_cast<const char *>(b64), static_cast<std::size_t>(n));
}

bool looks_like_http(std::span<const std::uint8_t> prefix) noexcept {
    constexpr std::string_view get = "GET ";
    for (std::size_t i = 0; i < std::min(prefix.size(), get.size()); ++i)
        if (prefix[i] != static_cast<std::uint8_t>(get[i]))
            return false;
    return true;
}

std::variant<HandshakeOk, HandshakeError> handshake(std::string_view head) {
    const std::size_t eol = head.find("\r\n");
    const std::string_view request_line = head.substr(0, eol);
    if (request_line.substr(0, 4) != "GET " || request_line.find(" HTTP/1.1") == std::string_view::npos)
        return reject("400 Bad Request", "expected a GET HTTP/1.1 upgrade request\n");

    std::string upgrade, connection, key, version;
    std::size_t pos = eol == std::string_view::npos ? head.size() : eol + 2;
    while (pos < head.size()) {
        std::size_t end = head.find("\r\n", pos);
        if (end == std::string_view::npos)
            end = head.size();
        const std::string_view line = head.substr(pos, end - pos);
        pos = end + 2;
        if (line.empty())
            break;
        const std::size_t colon = line.find(':');
        if (colon == std::string_view::npos)
            return reject("400 Bad Request", "malformed header line\n");
        const std::string name = lower(trim(line.substr(0, colon)));
        const std::string value(trim(line.substr(colon + 1)));
        if (name == "upgrade")
            upgrade = value;
        else if (name == "connection")
            connection = value;
        else if (name == "sec-websocket-key")
            key = value;
        else if (name == "sec-websocket-version")
            version = value;
    }
    if (!has_token(upgrade, "websocket") || !has_token(connection, "upgrade"))
        return reject("426 Upgrade Required", "this endpoint only speaks the WebSocket binary protocol\n");
    if (version != "13") {
        auto e = reject("426 Upgrade Required", "unsupported WebSocket version\n");
        e.response.insert(e.response.find("\r\n") + 2, "Sec-WebSocket-Version: 13\r\n");
        return e;
    }
    if (key.size() != 24)
        return reject("400 Bad Request", "missing or malformed Sec-WebSocket-Key\n");
    return HandshakeOk{"HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                       "Sec-WebSocket-Accept: " +
                       accept_key(key) + "\r\n\r\n"};
}

std::vector<std::uint8_t> encode_frame(Opcode op, std::span<const std::uint8_t> payload, bool fin) {
    std::vector<std::uint8_t> out;
    out.reserve(payload.size() + 10);
    put_header(out, op, payload.size(), fin, false);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

std::vector<std::uint8_t> encode_client_frame(Opcode op, std::span<const std::uint8_t> payload,
                                              std::uint32_t mask_key, bool fin) {
    std::vector<std::uint8_t> out;
    out.reserve(payload.size() + 14);
    put_header(out, op, payload.size(), fin, true);
    const std::uint8_t mask[4] = {static_cast<std::uint8_t>(mask_key >> 24), static_cast<std::uint8_t>(mask_key >> 16),
                                  static_cast<std::uint8_t>(mask_key >> 8), static_cast<std::uint8_t>(mask_key)};
    out.insert(out.end(), mask, mask + 4);
    for (std::size_t i = 0; i < payload.size(); ++i)
        out.push_back(payload[i] ^ mask[i % 4]);
    return out;
}

std::vector<std::uint8_t> close_payload(std::uint16_t status, std::string_view reason) {
    std::vector<std::uint8_t> out{static_cast<std::uint8_t>(status >> 8), static_cast<std::uint8_t>(status)};
    out.insert(out.end(), reason.begin(), reason.end());
    return out;
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
    if (failed_)
        return;
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<std::variant<Message, Violation>> FrameDecoder::next() {
    auto violate = [&](std::uint16_t status, std::string reason) -> std::optional<std::variant<Message, Violation>> {
        failed_ = true;
        return Violation{status, std::move(reason)};
    };
    while (!failed_) {
        const std::size_t avail = buf_.size() - pos_;
        if (avail < 2)
            return std::nullopt;
        const std::uint8_t *p = buf_.data() + pos_;
        const bool fin = p[0] & 0x80;
        if (p[0] & 0x70)
            return violate(1002, "reserved bits set");
        const auto op = static_cast<Opcode>(p[0] & 0x0F);
        const bool masked = p[1] & 0x80;
        std::uint64_t len = p[1] & 0x7F;
        std::size_t header = 2;
        if (len == 126) {
            if (avail < 4)
                return std::nullopt;
            len = (std::uint64_t{p[2]} << 8) | p[3];
            header = 4;
        } else if (len == 127) {
            if (avail < 10)
                return std::nullopt;
            len = 0;
            for (int i = 0; i < 8; ++i)
                len = (len << 8) | p[2 + i];
            header = 10;
        }
        switch (op) {
        case Opcode::Continuation:
        case Opcode::Text:
        case Opcode::Binary:
        case Opcode::Close:
        case Opcode::Ping:
        case Opcode::Pong: break;
        default: return violate(1002, "unknown opcode");
        }
        if (!masked)
            return violate(1002, "client frames must be masked");
        if (is_control(op) && (!fin || len > 125))
            return violate(1002, "malformed control frame");
        if (len > max_message_ || fragment_.size() + len > max_message_)
            return violate(1009, "message too large");
        if (avail < header + 4 + len)
            return std::nullopt;

        const std::uint8_t *mask = p + header;
        const std::uint8_t *data = mask + 4;
        std::vector<std::uint8_t> payload(static_cast<std::size_t>(len));
        for (std::size_t i = 0; i < payload.size(); ++i)
            payload[i] = data[i] ^ mask[i % 4];
        pos_ += header + 4 + static_cast<std::size_t>(len);

        if (is_control(op))
            return Message{op, std::move(payload)};
        if (op == Opcode::Continuation) {
            if (!fragment_op_)
                return violate(1002, "continuation without a started message");
            fragment_.insert(fragment_.end(), payload.begin(), payload.end());
            if (!fin)
                continue;
            Message m{*fragment_op_, std::move(fragment_)};
            fragment_.clear();
            fragment_op_.reset();
            return m;
        }
        if (fragment_op_)
            return violate(1002, "new message before the previous one finished");
        if (!fin) {
            fragment_op_ = op;
            fragment_ = std::move(payload);
            continue;
        }
        return Message{op, std::move(payload)};
    }
    return std::nullopt;
}

}  // namespace embedsom::ws
