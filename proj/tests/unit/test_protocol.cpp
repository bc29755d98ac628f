#include "doctest.h"
#include "oracles.hpp"

#include "embedsom/io.hpp"
#include "embedsom/protocol.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>

using namespace embedsom;
using namespace embedsom::proto;

namespace {

std::vector<std::uint8_t> hex_bytes(std::string_view hex) {
    std::vector<std::uint8_t> out;
    std::string digits;
    for (char c : hex)
        if (c != ' ')
            digits.push_back(c);
    for (std::size_t i = 0; i + 1 < digits.size(); i += 2)
        out.push_back(static_cast<std::uint8_t>(std::stoi(digits.substr(i, 2), nullptr, 16)));
    return out;
}

std::vector<Message> every_message() {
    ServerHello sh;
    sh.n = 841644;
    sh.d = 3;
    sh.dim_names = {"CD3", "CD4", "naïve"};
    DatasetInfo di;
    di.n = 10;
    di.d = 2;
    di.names = {"a", "b"};
    di.min = {-1.5, 0};
    di.max = {2.25, 1e10};
    SetParams sp;
    sp.k = 16;
    sp.mode = "graph";
    sp.sigma = 0.2;
    sp.alpha = 0.1;
    sp.alpha_km = 0.05;
    sp.k_g = 3;
    sp.paused = true;
    sp.color_dim = 1;
    FrameLandmarks fl;
    fl.lo = {0.f, 1.f, -2.5f, 3.f, 1e-8f, -0.f};
    fl.edges = {{0, 1}, {1, 2}};
    FramePoints fp;
    fp.frame_id = 99;
    fp.positions = {1.f, 2.f, 3.f, 4.f};
    fp.colors = {7, 200};
    return {ClientHello{},
            sh,
            LoadDataset{"/data/x.fcs", "fcs", "zscore"},
            LoadDataset{"y.tsv", std::nullopt, std::nullopt},
            di,
            sp,
            SetParams{},
            MoveLandmark{5, 1.25, -3.5, true},
            AddLandmark{0.5, 0.25},
            DuplicateLandmark{3},
            RemoveLandmark{4},
            fl,
            FrameLandmarks{},
            fp,
            FramePoints{},
            ErrorMessage{"unknown_id", "no landmark 9"}};
}

std::string code_of(const Message &m) {
    const auto *e = std::get_if<ErrorMessage>(&m);
    return e ? e->code : "<not an error>";
}

}  // namespace

TEST_CASE("every message type round-trips") {
    for (const auto &m : every_message()) {
        const auto bytes = encode(m);
        REQUIRE(bytes.size() >= 5);
        std::uint32_t len = bytes[0] | (bytes[1] << 8) | (bytes[2] << 16) | (std::uint32_t(bytes[3]) << 24);
        CHECK(len == bytes.size() - 4);
        CHECK(bytes[4] == static_cast<std::uint8_t>(tag_of(m)));
        CHECK(decode(bytes) == m);
    }
    CHECK(tag_of(DuplicateLandmark{1}) == Tag::AddLandmark);
}

TEST_CASE("golden FramePoints bytes") {
    FramePoints fp;
    fp.frame_id = 7;
    fp.positions = {0.f, 0.f, 1.f, -1.f};
    fp.colors = {0, 255};
    const auto golden = hex_bytes("1B000000 31 07000000 02000000 00000000 00000000 0000803F 000080BF 00 FF");
    CHECK(encode(fp) == golden);
    CHECK(decode(golden) == Message(fp));
}

TEST_CASE("FramePoints length law") {
    for (std::size_t n : {0, 1, 2, 1000}) {
        FramePoints fp;
        fp.positions.assign(2 * n, 0.5f);
        fp.colors.assign(n, 3);
        const auto bytes = encode(fp);
        CHECK(bytes.size() == 13 + 9 * n);

        FramePacket pk;
        pk.frame_id = 4;
        pk.positions = Matrix<float>(n, 2, 0.5f);
        pk.colors.assign(n, 3);
        CHECK(frame_points_payload(pk).size() == 8 + 9 * n);
        fp.frame_id = 4;
        CHECK(to_frame_points(pk) == fp);
    }
}

TEST_CASE("decode errors") {
    FramePoints fp;
    fp.positions = {1, 2};
    fp.colors = {9};
    auto ok = encode(fp);
    auto truncated = ok;
    truncated.pop_back();
    CHECK(code_of(decode(truncated)) == "truncated");
    CHECK(code_of(decode(std::span<const std::uint8_t>(ok.data(), 3))) == "truncated");

    auto bad_tag = ok;
    bad_tag[4] = 0x55;
    CHECK(code_of(decode(bad_tag)) == "bad_tag");

    auto zero_len = hex_bytes("00000000");
    CHECK(code_of(decode(zero_len)) == "bad_length");

    // payload length inconsistent with n
    auto bad_payload = ok;
    bad_payload[9] = 5;
    CHECK(code_of(decode(bad_payload)) == "bad_payload");

    std::vector<std::uint8_t> json{0, 0, 0, 0, 0x21};
    for (char c : std::string("{\"id\": 1, \"x\":"))
        json.push_back(static_cast<std::uint8_t>(c));
    json[0] = static_cast<std::uint8_t>(json.size() - 4);
    CHECK(code_of(decode(json)) == "malformed_json");

    std::vector<std::uint8_t> missing{0, 0, 0, 0, 0x21};
    for (char c : std::string("{\"id\": 1}"))
        missing.push_back(static_cast<std::uint8_t>(c));
    missing[0] = static_cast<std::uint8_t>(missing.size() - 4);
    CHECK(code_of(decode(missing)) == "bad_payload");

    // pinned defaults to false
    std::vector<std::uint8_t> move{0, 0, 0, 0, 0x21};
    for (char c : std::string("{\"id\":2,\"x\":1,\"y\":2}"))
        move.push_back(static_cast<std::uint8_t>(c));
    move[0] = static_cast<std::uint8_t>(move.size() - 4);
    CHECK(decode(move) == Message(MoveLandmark{2, 1, 2, false}));
}

TEST_CASE("stream decoder: byte-at-a-time and whole-buffer feeds agree") {
    std::vector<std::uint8_t> stream;
    const auto msgs = every_message();
    for (const auto &m : msgs)
        encode_to(m, stream);
    StreamDecoder whole;
    whole.feed(stream);
    for (const auto &m : msgs)
        CHECK(whole.next() == std::optional<Message>(m));
    CHECK(!whole.next());

    StreamDecoder drip;
    std::vector<Message> got;
    for (auto b : stream) {
        drip.feed(std::span<const std::uint8_t>(&b, 1));
        while (auto m = drip.next())
            got.push_back(*m);
    }
    CHECK(got == msgs);
    CHECK(drip.buffered() == 0);
}

TEST_CASE("stream decoder: bad frames are reported, connection survives") {
    std::vector<std::uint8_t> stream;
    encode_to(AddLandmark{1, 2}, stream);
    auto bad = encode(RemoveLandmark{3});
    bad[4] = 0x44;  // unknown tag, well framed
    stream.insert(stream.end(), bad.begin(), bad.end());
    encode_to(RemoveLandmark{5}, stream);
    StreamDecoder d;
    d.feed(stream);
    CHECK(d.next() == std::optional<Message>(AddLandmark{1, 2}));
    CHECK(code_of(*d.next()) == "bad_tag");
    CHECK(d.next() == std::optional<Message>(RemoveLandmark{5}));
}

TEST_CASE("stream decoder: resynchronizes after one corrupted read") {
    std::vector<std::uint8_t> good;
    for (std::uint32_t i = 0; i < 5; ++i) {
        FramePoints fp;
        fp.frame_id = i;
        fp.positions = {float(i), 1.f};
        fp.colors = {static_cast<std::uint8_t>(i)};
        encode_to(fp, good);
    }
    const std::size_t frame = good.size() / 5;

    // joining mid-stream: start a few bytes into the first frame
    for (std::size_t cut = 1; cut < frame; ++cut) {
        StreamDecoder d(false);
        d.feed(std::span<const std::uint8_t>(good).subspan(cut));
        std::vector<Message> out;
        while (auto m = d.next())
            out.push_back(*m);
        std::size_t errors = 0, frames = 0;
        for (const auto &m : out) {
            if (std::holds_alternative<ErrorMessage>(m))
                ++errors;
            else if (const auto *fp = std::get_if<FramePoints>(&m)) {
                CHECK(fp->frame_id == frames + 1);
                ++frames;
            }
        }
        CHECK(errors == 1);
        CHECK(frames == 4);
    }

    // corrupted length prefix inside a synchronized stream
    auto corrupt = good;
    corrupt[frame + 3] = 0xEE;
    StreamDecoder d;
    d.feed(corrupt);
    std::vector<std::uint32_t> ids;
    std::size_t errors = 0;
    while (auto m = d.next()) {
        if (std::holds_alternative<ErrorMessage>(*m))
            ++errors;
        if (const auto *fp = std::get_if<FramePoints>(&*m))
            ids.push_back(fp->frame_id);
    }
    CHECK(errors == 1);
    CHECK(ids == std::vector<std::uint32_t>{0, 2, 3, 4});
}

TEST_CASE("frame packets convert to wire messages") {
    FramePacket pk;
    pk.frame_id = 3;
    pk.positions = Matrix<float>(2, 2, std::vector<float>{1, 2, 3, 4});
    pk.landmarks = Matrix<float>(3, 2, std::vector<float>{0, 0, 1, 0, 0, 1});
    pk.edges = {{0, 1}, {0, 2}};
    pk.colors = {10, 20};
    const auto fl = to_frame_landmarks(pk);
    CHECK(fl.lo == std::vector<float>{0, 0, 1, 0, 0, 1});
    CHECK(fl.edges == pk.edges);
    CHECK(encode(fl).size() == 4 + 1 + 8 + 8 * 3 + 8 * 2);

    const Dataset ds(Matrix<float>(2, 2, std::vector<float>{0, 1, 2, 3}), {"u", "v"});
    const auto hello = make_server_hello(ds);
    CHECK(hello.n == 2);
    CHECK(hello.d == 2);
    CHECK(hello.dim_names == std::vector<std::string>{"u", "v"});
    const auto info = make_dataset_info(ds);
    CHECK(info.min == std::vector<double>{0, 1});
    CHECK(info.max == std::vector<double>{2, 3});
}

TEST_CASE("frame digest is a plain SHA-256 over FramePoints payloads") {
    const std::vector<std::uint8_t> abc{'a', 'b', 'c'};
    CHECK(sha256_hex(abc) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    FramePacket pk;
    pk.frame_id = 1;
    pk.positions = Matrix<float>(1, 2, std::vector<float>{1, 2});
    pk.colors = {0};
    FrameDigest a, b;
    a.add(pk);
    a.add(pk);
    auto bytes = frame_points_payload(pk);
    auto twice = bytes;
    twice.insert(twice.end(), bytes.begin(), bytes.end());
    b.add_bytes(twice);
    CHECK(a.hex() == b.hex());
    CHECK(a.hex() == sha256_hex(twice));
}

TEST_CASE("control payloads conform to the shipped schema") {
    const auto schema = nlohmann::json::parse(read_file(std::filesystem::path(EMBEDSOM_SOURCE_DIR) / "docs/protocol.schema.json"));
    const auto &defs = schema.at("$defs");
    const std::map<std::uint8_t, std::string> by_tag{{0x01, "ClientHello"},   {0x02, "ServerHello"},
                                                     {0x10, "LoadDataset"},   {0x11, "DatasetInfo"},
                                                     {0x20, "SetParams"},     {0x21, "MoveLandmark"},
                                                     {0x22, "AddLandmark"},   {0x23, "RemoveLandmark"},
                                                     {0x7F, "Error"}};
    for (const auto &[name, tag] : schema.at("x-tags").items())
        if (tag.get<int>() != 0x30 && tag.get<int>() != 0x31)
            CHECK(by_tag.at(static_cast<std::uint8_t>(tag.get<int>())) == name);
    std::size_t checked = 0;
    for (const auto &m : every_message()) {
        const auto bytes = encode(m);
        const std::uint8_t tag = bytes[4];
        if (!by_tag.contains(tag))
            continue;
        const auto payload = nlohmann::json::parse(bytes.begin() + 5, bytes.end());
        std::string def = by_tag.at(tag);
        if (std::holds_alternative<DuplicateLandmark>(m))
            def = "DuplicateLandmark";
        INFO(def);
        const auto &props = defs.at(def).at("properties");
        for (const auto &[key, value] : payload.items())
            CHECK(props.contains(key));
        for (const auto &key : defs.at(def).at("required"))
            CHECK(payload.contains(key.get<std::string>()));
        ++checked;
    }
    CHECK(checked == 12);
}
