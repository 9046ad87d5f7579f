#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "latmesh/wire.hpp"

using namespace latmesh;
using namespace latmesh::wire;

namespace {

std::vector<std::uint8_t> bytes(std::initializer_list<unsigned> v) {
    return {v.begin(), v.end()};
}

} // namespace

TEST_CASE("probe frame layout is byte-exact") {
    // sender=1, round=0, empty payload, hand-assembled from the layout:
    // [len u32][tag 01][sender u32][origin u32][round u64]
    auto expected = bytes({0x00, 0x00, 0x00, 0x11,           // 17 body bytes
                           0x01,                             // tag
                           0x00, 0x00, 0x00, 0x01,           // sender
                           0x00, 0x00, 0x00, 0x01,           // origin = sender
                           0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00});
    CHECK(encode_probe({1, 0, {}}) == expected);

    auto decoded = decode_probe(expected);
    CHECK(decoded.sender == 1);
    CHECK(decoded.round == 0);
    CHECK(decoded.payload.empty());
}

TEST_CASE("echo frame layout is byte-exact") {
    // responder=5, origin=3, round=7, empty payload
    auto expected = bytes({0x00, 0x00, 0x00, 0x11,
                           0x02,
                           0x00, 0x00, 0x00, 0x05,
                           0x00, 0x00, 0x00, 0x03,
                           0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x07});
    CHECK(encode_echo({5, 3, 7, {}}) == expected);

    auto decoded = decode_echo(expected);
    CHECK(decoded.responder == 5);
    CHECK(decoded.origin_sender == 3);
    CHECK(decoded.round == 7);
}

TEST_CASE("frame sizes follow the layout arithmetic") {
    std::vector<std::uint8_t> payload(1024, 0xab);
    auto frame = encode_probe({2, 9, payload});
    CHECK(frame.size() == 4 + kHeaderBytes + 1024);
    // prefix counts bytes after itself
    std::uint32_t len = (std::uint32_t(frame[0]) << 24) | (std::uint32_t(frame[1]) << 16) |
                        (std::uint32_t(frame[2]) << 8) | frame[3];
    CHECK(len == frame.size() - 4);
}

TEST_CASE("round-trip identity over random messages and payload sizes") {
    std::mt19937_64 rng(1337);
    std::uniform_int_distribution<std::uint32_t> id_dist(0, 0xffffffffu);
    std::uniform_int_distribution<int> size_dist(0, 4096);
    for (int i = 0; i < 200; ++i) {
        std::vector<std::uint8_t> payload(static_cast<std::size_t>(size_dist(rng)));
        for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
        ProbeMessage probe{id_dist(rng), rng(), payload};
        CHECK(decode_probe(encode_probe(probe)) == probe);
        EchoMessage echo{id_dist(rng), id_dist(rng), rng(), payload};
        CHECK(decode_echo(encode_echo(echo)) == echo);
    }
}

TEST_CASE("make_echo maps fields and preserves the payload") {
    ProbeMessage probe{3, 7, {0xde, 0xad, 0xbe, 0xef}};
    EchoMessage echo = make_echo(probe, 5);
    CHECK(echo.responder == 5);
    CHECK(echo.origin_sender == 3);
    CHECK(echo.round == 7);
    CHECK(echo.payload == probe.payload);

    EchoMessage self_echo = make_echo(probe, probe.sender);
    CHECK(self_echo.responder == self_echo.origin_sender);
}

TEST_CASE("decode rejects the wrong tag") {
    auto echo_frame = encode_echo({5, 3, 7, {}});
    CHECK_THROWS_AS(decode_probe(echo_frame), WireError);
    try {
        decode_probe(echo_frame);
    } catch (const WireError& e) {
        CHECK(e.code == WireErrc::BadTag);
    }
    auto probe_frame = encode_probe({1, 0, {}});
    try {
        decode_echo(probe_frame);
        FAIL("expected BadTag");
    } catch (const WireError& e) {
        CHECK(e.code == WireErrc::BadTag);
    }
}

TEST_CASE("decode rejects length mismatches") {
    // prefix claims 100 bytes over a 50-byte body
    std::vector<std::uint8_t> frame(4 + 50, 0);
    frame[3] = 100;
    frame[4] = kTagProbe;
    try {
        decode_probe(frame);
        FAIL("expected Truncated");
    } catch (const WireError& e) {
        CHECK(e.code == WireErrc::Truncated);
    }
    // frame shorter than the minimum header
    std::vector<std::uint8_t> tiny(4 + 8, 0);
    tiny[3] = 8;
    try {
        decode_probe(tiny);
        FAIL("expected Truncated");
    } catch (const WireError& e) {
        CHECK(e.code == WireErrc::Truncated);
    }
}
