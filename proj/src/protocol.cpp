#include "embedsom/protocol.hpp"

#include "json.hpp"
#include <openssl/evp.h>

#include <bit>
#include <cstring>

namespace embedsom::proto {

using nlohmann::json;

bool is_known_tag(std::uint8_t tag) noexcept {
    switch (static_cast<Tag>(tag)) {
    case Tag::ClientHello:
    case Tag::ServerHello:
    case Tag::LoadDataset:
    case Tag::DatasetInfo:
    case Tag::SetParams:
    case Tag::MoveLandmark:
    case Tag::AddLandmark:
    case Tag::RemoveLandmark:
    case Tag::FrameLandmarks:
    case Tag::FramePoints:
    case Tag::Error:
        return true;
    }
    return false;
}

namespace {

template <typename... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <typename... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t> &out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

float get_f32(std::span<const std::uint8_t> b, std::size_t at) { return std::bit_cast<float>(get_u32(b, at)); }

json control_to_json(const Message &m) {
    return std::visit(
        Overloaded{
            [](const ClientHello &h) { return json{{"protocol_version", h.protocol_version}}; },
            [](const ServerHello &h) {
                return json{{"protocol_version", h.protocol_version}, {"n", h.n}, {"d", h.d}, {"dim_names", h.dim_names}};
            },
            [](const LoadDataset &l) {
                json j{{"path", l.path}};
                if (l.format)
                    j["format"] = *l.format;
                if (l.transform)
                    j["transform"] = *l.transform;
                return j;
            },
            [](const DatasetInfo &i) {
                return json{{"n", i.n}, {"d", i.d}, {"names", i.names}, {"min", i.min}, {"max", i.max}};
            },
            [](const SetParams &p) {
                json j = json::object();
                if (p.k) j["k"] = *p.k;
                if (p.mode) j["mode"] = *p.mode;
                if (p.sigma) j["sigma"] = *p.sigma;
                if (p.alpha) j["alpha"] = *p.alpha;
                if (p.alpha_km) j["alpha_km"] = *p.alpha_km;
                if (p.k_g) j["k_g"] = *p.k_g;
                if (p.paused) j["paused"] = *p.paused;
                if (p.color_dim) j["color_dim"] = *p.color_dim;
                return j;
            },
            [](const MoveLandmark &mv) { return json{{"id", mv.id}, {"x", mv.x}, {"y", mv.y}, {"pinned", mv.pinned}}; },
            [](const AddLandmark &a) { return json{{"x", a.x}, {"y", a.y}}; },
            [](const DuplicateLandmark &d) { return json{{"id", d.id}}; },
            [](const RemoveLandmark &r) { return json{{"id", r.id}}; },
            [](const ErrorMessage &e) { return json{{"code", e.code}, {"detail", e.detail}}; },
            [](const auto &) { return json(); },
        },
        m);
}

struct PayloadError {
    std::string code;
    std::string detail;
};

template <typename T>
T field(const json &j, const char *key) {
    if (!j.contains(key))
        throw PayloadError{"bad_payload", std::string("missing field '") + key + "'"};
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &) {
        throw PayloadError{"bad_payload", std::string("field '") + key + "' has the wrong type"};
    }
}

template <typename T>
std::optional<T> opt_field(const json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
    return field<T>(j, key);
}

std::uint64_t unsigned_field(const json &j, const char *key) {
    if (!j.contains(key) || !j.at(key).is_number_unsigned())
        throw PayloadError{"bad_payload", std::string("field '") + key + "' must be a non-negative integer"};
    return j.at(key).get<std::uint64_t>();
}

std::optional<std::uint64_t> opt_unsigned(const json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null())
        return std::nullopt;
    return unsigned_field(j, key);
}

std::uint32_t index_field(const json &j, const char *key) {
    const auto v = unsigned_field(j, key);
    if (v > 0xFFFFFFFFull)
        throw PayloadError{"bad_payload", std::string("field '") + key + "' out of range"};
    return static_cast<std::uint32_t>(v);
}

Message control_from_json(Tag tag, const json &j) {
    if (!j.is_object())
        throw PayloadError{"bad_payload", "control payload must be a JSON object"};
    switch (tag) {
    case Tag::ClientHello: return ClientHello{field<int>(j, "protocol_version")};
    case Tag::ServerHello:
        return ServerHello{field<int>(j, "protocol_version"), unsigned_field(j, "n"), unsigned_field(j, "d"),
                           field<std::vector<std::string>>(j, "dim_names")};
    case Tag::LoadDataset:
        return LoadDataset{field<std::string>(j, "path"), opt_field<std::string>(j, "format"),
                           opt_field<std::string>(j, "transform")};
    case Tag::DatasetInfo:
        return DatasetInfo{unsigned_field(j, "n"), unsigned_field(j, "d"), field<std::vector<std::string>>(j, "names"),
                           field<std::vector<double>>(j, "min"), field<std::vector<double>>(j, "max")};
    case Tag::SetParams:
        return SetParams{opt_unsigned(j, "k"),        opt_field<std::string>(j, "mode"), opt_field<double>(j, "sigma"),
                         opt_field<double>(j, "alpha"), opt_field<double>(j, "alpha_km"), opt_unsigned(j, "k_g"),
                         opt_field<bool>(j, "paused"), opt_unsigned(j, "color_dim")};
    case Tag::MoveLandmark:
        return MoveLandmark{index_field(j, "id"), field<double>(j, "x"), field<double>(j, "y"),
                            opt_field<bool>(j, "pinned").value_or(false)};
    case Tag::AddLandmark:
        if (j.contains("id"))
            return DuplicateLandmark{index_field(j, "id")};
        return AddLandmark{field<double>(j, "x"), field<double>(j, "y")};
    case Tag::RemoveLandmark: return RemoveLandmark{index_field(j, "id")};
    case Tag::Error: return ErrorMessage{field<std::string>(j, "code"), opt_field<std::string>(j, "detail").value_or("")};
    default: break;
    }
    throw PayloadError{"bad_tag", "not a control tag"};
}

// Returns the message or fills `err`.
std::optional<Message> try_decode_body(std::uint8_t tag_byte, std::span<const std::uint8_t> p, PayloadError &err) {
    if (!is_known_tag(tag_byte)) {
        err = {"bad_tag", "unknown message tag " + std::to_string(tag_byte)};
        return std::nullopt;
    }
    const auto tag = static_cast<Tag>(tag_byte);
    try {
        if (tag == Tag::FramePoints) {
            if (p.size() < 8)
                throw PayloadError{"bad_payload", "FramePoints shorter than its header"};
            FramePoints fp;
            fp.frame_id = get_u32(p, 0);
            const std::uint64_t n = get_u32(p, 4);
            if (p.size() != 8 + 9 * n)
                throw PayloadError{"bad_payload", "FramePoints length does not match n = " + std::to_string(n)};
            fp.positions.resize(2 * n);
            for (std::size_t i = 0; i < 2 * n; ++i)
                fp.positions[i] = get_f32(p, 8 + 4 * i);
            fp.colors.assign(p.begin() + static_cast<std::ptrdiff_t>(8 + 8 * n), p.end());
            return fp;
        }
        if (tag == Tag::FrameLandmarks) {
            if (p.size() < 8)
                throw PayloadError{"bad_payload", "FrameLandmarks shorter than its header"};
            const std::uint64_t g = get_u32(p, 0);
            if (p.size() < 8 + 8 * g)
                throw PayloadError{"bad_payload", "FrameLandmarks truncated landmark block"};
            const std::uint64_t e = get_u32(p, 4 + 8 * g);
            if (p.size() != 8 + 8 * g + 8 * e)
                throw PayloadError{"bad_payload", "FrameLandmarks length does not match g and e"};
            FrameLandmarks fl;
            fl.lo.resize(2 * g);
            for (std::size_t i = 0; i < 2 * g; ++i)
                fl.lo[i] = get_f32(p, 4 + 4 * i);
            const std::size_t base = 8 + 8 * g;
            for (std::size_t i = 0; i < e; ++i)
                fl.edges.emplace_back(get_u32(p, base + 8 * i), get_u32(p, base + 8 * i + 4));
            return fl;
        }
        json j;
        try {
            j = json::parse(p.begin(), p.end());
        } catch (const json::parse_error &ex) {
            throw PayloadError{"malformed_json", ex.what()};
        }
        return control_from_json(tag, j);
    } catch (const PayloadError &pe) {
        err = pe;
        return std::nullopt;
    }
}

}  // namespace

Tag tag_of(const Message &m) noexcept {
    return std::visit(Overloaded{
                          [](const ClientHello &) { return Tag::ClientHello; },
                          [](const ServerHello &) { return Tag::ServerHello; },
                          [](const LoadDataset &) { return Tag::LoadDataset; },
                          [](const DatasetInfo &) { return Tag::DatasetInfo; },
                          [](const SetParams &) { return Tag::SetParams; },
                          [](const MoveLandmark &) { return Tag::MoveLandmark; },
                          [](const AddLandmark &) { return Tag::AddLandmark; },
                          [](const DuplicateLandmark &) { return Tag::AddLandmark; },
                          [](const RemoveLandmark &) { return Tag::RemoveLandmark; },
                          [](const FrameLandmarks &) { return Tag::FrameLandmarks; },
                          [](const FramePoints &) { return Tag::FramePoints; },
                          [](const ErrorMessage &) { return Tag::Error; },
                      },
                      m);
}

void encode_to(const Message &m, std::vector<std::uint8_t> &out) {
    const std::size_t start = out.size();
    put_u32(out, 0);  // patched below
    out.push_back(static_cast<std::uint8_t>(tag_of(m)));
    if (const auto *fp = std::get_if<FramePoints>(&m)) {
        const std::size_t n = fp->colors.size();
        put_u32(out, fp->frame_id);
        put_u32(out, static_cast<std::uint32_t>(n));
        for (std::size_t i = 0; i < 2 * n; ++i)
            put_f32(out, fp->positions[i]);
        out.insert(out.end(), fp->colors.begin(), fp->colors.end());
    } else if (const auto *fl = std::get_if<FrameLandmarks>(&m)) {
        put_u32(out, static_cast<std::uint32_t>(fl->lo.size() / 2));
        for (float v : fl->lo)
            put_f32(out, v);
        put_u32(out, static_cast<std::uint32_t>(fl->edges.size()));
        for (const auto &[a, b] : fl->edges) {
            put_u32(out, a);
            put_u32(out, b);
        }
    } else {
        const std::string s = control_to_json(m).dump();
        out.insert(out.end(), s.begin(), s.end());
    }
    const auto len = static_cast<std::uint32_t>(out.size() - start - 4);
    for (int i = 0; i < 4; ++i)
        out[start + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(len >> (8 * i));
}

std::vector<std::uint8_t> encode(const Message &m) {
    std::vector<std::uint8_t> out;
    encode_to(m, out);
    return out;
}

Message decode_body(std::uint8_t tag, std::span<const std::uint8_t> payload) {
    PayloadError err;
    if (auto m = try_decode_body(tag, payload, err))
        return std::move(*m);
    return ErrorMessage{err.code, err.detail};
}

Message decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4)
        return ErrorMessage{"truncated", "missing length prefix"};
    const std::uint32_t len = get_u32(bytes, 0);
    if (len < 1 || len > kMaxMessageLength)
        return ErrorMessage{"bad_length", "implausible length prefix " + std::to_string(len)};
    if (bytes.size() < 4 + static_cast<std::size_t>(len))
        return ErrorMessage{"truncated", "message needs " + std::to_string(len) + " bytes after the prefix, got " +
                                             std::to_string(bytes.size() - 4)};
    return decode_body(bytes[4], bytes.subspan(5, len - 1));
}

std::vector<std::uint8_t> frame_points_payload(const FramePacket &frame) {
    std::vector<std::uint8_t> out;
    const std::size_t n = frame.positions.rows();
    out.reserve(8 + 9 * n);
    put_u32(out, frame.frame_id);
    put_u32(out, static_cast<std::uint32_t>(n));
    for (float v : frame.positions.data())
        put_f32(out, v);
    out.insert(out.end(), frame.colors.begin(), frame.colors.end());
    return out;
}

FramePoints to_frame_points(const FramePacket &frame) {
    FramePoints fp;
    fp.frame_id = frame.frame_id;
    fp.positions.assign(frame.positions.data().begin(), frame.positions.data().end());
    fp.colors = frame.colors;
    return fp;
}

FrameLandmarks to_frame_landmarks(const FramePacket &frame) {
    FrameLandmarks fl;
    fl.lo.assign(frame.landmarks.data().begin(), frame.landmarks.data().end());
    fl.edges = frame.edges;
    return fl;
}

ServerHello make_server_hello(const Dataset &data) {
    return ServerHello{kProtocolVersion, data.size(), data.dim(), data.dim_names()};
}

DatasetInfo make_dataset_info(const Dataset &data) {
    return DatasetInfo{data.size(), data.dim(), data.dim_names(), data.stats().min, data.stats().max};
}

// ---- stream decoding -----------------------------------------------------

void StreamDecoder::feed(std::span<const std::uint8_t> bytes) {
    if (head_ > 0 && head_ >= buffer_.size() / 2) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(head_));
        head_ = 0;
    }
    buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> StreamDecoder::next() {
    if (!synced_)
        return scan();
    const std::span<const std::uint8_t> avail(buffer_.data() + head_, buffer_.size() - head_);
    if (avail.size() < 4)
        return std::nullopt;
    const std::uint32_t len = get_u32(avail, 0);
    if (len < 1 || len > kMaxMessageLength) {
        synced_ = false;
        resync_reported_ = true;
        ++head_;
        return ErrorMessage{"bad_length", "implausible length prefix " + std::to_string(len) + ", resynchronizing"};
    }
    if (avail.size() < 4 + static_cast<std::size_t>(len))
        return std::nullopt;
    head_ += 4 + len;
    return decode_body(avail[4], avail.subspan(5, len - 1));
}

std::optional<Message> StreamDecoder::scan() {
    for (;;) {
        const std::span<const std::uint8_t> avail(buffer_.data() + head_, buffer_.size() - head_);
        if (avail.size() < 5)
            return std::nullopt;
        const std::uint32_t len = get_u32(avail, 0);
        if (len >= 1 && len <= kMaxMessageLength && is_known_tag(avail[4])) {
            if (avail.size() < 4 + static_cast<std::size_t>(len))
                return std::nullopt;  // candidate not yet verifiable
            PayloadError err;
            if (auto m = try_decode_body(avail[4], avail.subspan(5, len - 1), err)) {
                synced_ = true;
                const std::size_t skipped = std::exchange(skipped_, 0);
                if (!resync_reported_ && skipped > 0) {
                    // the message itself is decoded on the next call
                    resync_reported_ = false;
                    return ErrorMessage{"resync", "skipped " + std::to_string(skipped) + " bytes"};
                }
                resync_reported_ = false;
                head_ += 4 + len;
                return m;
            }
        }
        ++head_;
        ++skipped_;
    }
}

// ---- digests -------------------------------------------------------------

FrameDigest::FrameDigest() : ctx_(EVP_MD_CTX_new()) {
    EVP_DigestInit_ex(static_cast<EVP_MD_CTX *>(ctx_), EVP_sha256(), nullptr);
}

FrameDigest::~FrameDigest() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX *>(ctx_)); }

void FrameDigest::add_bytes(std::span<const std::uint8_t> bytes) {
    EVP_DigestUpdate(static_cast<EVP_MD_CTX *>(ctx_), bytes.data(), bytes.size());
}

void FrameDigest::add(const FramePacket &frame) { add_bytes(frame_points_payload(frame)); }

std::string FrameDigest::hex() {
    if (result_.empty()) {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(static_cast<EVP_MD_CTX *>(ctx_), md, &len);
        static constexpr char digits[] = "0123456789abcdef";
        for (unsigned int i = 0; i < len; ++i) {
            result_ += digits[md[i] >> 4];
            result_ += digits[md[i] & 15];
        }
    }
    return result_;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    FrameDigest d;
    d.add_bytes(bytes);
    return d.hex();
}

}  // namespace embedsom::proto
