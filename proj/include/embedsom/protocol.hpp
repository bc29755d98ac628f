#pragma once

#include "embedsom/core.hpp"
#include "embedsom/engine.hpp"

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

// Wire format: u32 LE length (= 1 + payload bytes), u8 tag, payload.
// Control payloads are UTF-8 JSON, frame payloads packed little-endian.
namespace embedsom::proto {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxMessageLength = 1u << 28;

enum class Tag : std::uint8_t {
    ClientHello = 0x01,
    ServerHello = 0x02,
    LoadDataset = 0x10,
    DatasetInfo = 0x11,
    SetParams = 0x20,
    MoveLandmark = 0x21,
    AddLandmark = 0x22,  // also DuplicateLandmark ({"id"} instead of {"x","y"})
    RemoveLandmark = 0x23,
    FrameLandmarks = 0x30,
    FramePoints = 0x31,
    Error = 0x7F,
};

bool is_known_tag(std::uint8_t tag) noexcept;

struct ClientHello {
    int protocol_version = kProtocolVersion;
    bool operator==(const ClientHello &) const = default;
};
struct ServerHello {
    int protocol_version = kProtocolVersion;
    std::uint64_t n = 0;
    std::uint64_t d = 0;
    std::vector<std::string> dim_names;
    bool operator==(const ServerHello &) const = default;
};
struct LoadDataset {
    std::string path;
    std::optional<std::string> format;
    std::optional<std::string> transform;
    bool operator==(const LoadDataset &) const = default;
};
struct DatasetInfo {
    std::uint64_t n = 0;
    std::uint64_t d = 0;
    std::vector<std::string> names;
    std::vector<double> min;
    std::vector<double> max;
    bool operator==(const DatasetInfo &) const = default;
};
struct SetParams {
    std::optional<std::uint64_t> k{};
    std::optional<std::string> mode{};
    std::optional<double> sigma{};
    std::optional<double> alpha{};
    std::optional<double> alpha_km{};
    std::optional<std::uint64_t> k_g{};
    std::optional<bool> paused{};
    std::optional<std::uint64_t> color_dim{};
    bool operator==(const SetParams &) const = default;
};
// `id` fields are landmark row indices as shown in the last FrameLandmarks.
struct MoveLandmark {
    std::uint32_t id = 0;
    double x = 0;
    double y = 0;
    bool pinned = false;
    bool operator==(const MoveLandmark &) const = default;
};
struct AddLandmark {
    double x = 0;
    double y = 0;
    bool operator==(const AddLandmark &) const = default;
};
struct DuplicateLandmark {
    std::uint32_t id = 0;
    bool operator==(const DuplicateLandmark &) const = default;
};
struct RemoveLandmark {
    std::uint32_t id = 0;
    bool operator==(const RemoveLandmark &) const = default;
};
struct FrameLandmarks {
    std::vector<float> lo;  // g x 2, interleaved
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    bool operator==(const FrameLandmarks &) const = default;
};
struct FramePoints {
    std::uint32_t frame_id = 0;
    std::vector<float> positions;  // n x 2, interleaved
    std::vector<std::uint8_t> colors;
    bool operator==(const FramePoints &) const = default;
};
struct ErrorMessage {
    std::string code;
    std::string detail;
    bool operator==(const ErrorMessage &) const = default;
};

using Message = std::variant<ClientHello, ServerHello, LoadDataset, DatasetInfo, SetParams, MoveLandmark,
                             AddLandmark, DuplicateLandmark, RemoveLandmark, FrameLandmarks, FramePoints,
                             ErrorMessage>;

Tag tag_of(const Message &m) noexcept;

/// Appends the framed message to `out`.
void encode_to(const Message &m, std::vector<std::uint8_t> &out);
std::vector<std::uint8_t> encode(const Message &m);

/// Decodes exactly one framed message. Any problem (truncation, bad length,
/// unknown tag, malformed JSON or binary layout) is reported as an
/// `ErrorMessage` whose `code` is one of "truncated", "bad_length",
/// "bad_tag", "malformed_json", "bad_payload".
Message decode(std::span<const std::uint8_t> bytes);

/// Decodes tag + payload (the framed message without its length prefix).
Message decode_body(std::uint8_t tag, std::span<const std::uint8_t> payload);

/// FramePoints body bytes after the tag: u32 frame_id, u32 n, n x (f32, f32), n x u8.
std::vector<std::uint8_t> frame_points_payload(const FramePacket &frame);

FramePoints to_frame_points(const FramePacket &frame);
FrameLandmarks to_frame_landmarks(const FramePacket &frame);
ServerHello make_server_hello(const Dataset &data);
DatasetInfo make_dataset_info(const Dataset &data);

/// Incremental reader over a byte stream. Well-framed messages with an
/// unknown tag or bad payload are skipped whole and reported; an
/// implausible length prefix (or starting unsynchronized) makes the reader
/// scan forward for the next frame that validates, reporting one error.
class StreamDecoder {
public:
    explicit StreamDecoder(bool synchronized = true) : synced_(synchronized) {}

    void feed(std::span<const std::uint8_t> bytes);
    /// Next decoded message (possibly an ErrorMessage), or nullopt when more
    /// bytes are needed.
    std::optional<Message> next();

    std::size_t buffered() const noexcept { return buffer_.size() - head_; }

private:
    std::optional<Message> scan();

    std::vector<std::uint8_t> buffer_;
    std::size_t head_ = 0;
    bool synced_;
    bool resync_reported_ = false;
    std::size_t skipped_ = 0;
};

/// SHA-256 over the concatenated FramePoints payloads of a frame stream.
class FrameDigest {
public:
    FrameDigest();
    ~FrameDigest();
    FrameDigest(const FrameDigest &) = delete;
    FrameDigest &operator=(const FrameDigest &) = delete;

    void add(const FramePacket &frame);
    void add_bytes(std::span<const std::uint8_t> bytes);
    /// Lowercase hex; finalizes the digest.
    std::string hex();

private:
    void *ctx_;
    std::string result_;
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace embedsom::proto
