#include "latmesh/wire.hpp"

#include <cstring>
#include <limits>

namespace latmesh::wire {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
    put_u32(out, static_cast<std::uint32_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

std::uint64_t get_u64(const std::uint8_t* p) {
    return (std::uint64_t(get_u32(p)) << 32) | get_u32(p + 4);
}

std::vector<std::uint8_t> encode(std::uint8_t tag, std::uint32_t sender_field,
                                 std::uint32_t origin_field, std::uint64_t round,
                                 const std::vector<std::uint8_t>& payload) {
    if (payload.size() >= std::numeric_limits<std::uint32_t>::max() - kHeaderBytes)
        throw WireError(WireErrc::PayloadTooLarge, "payload exceeds frame limit");
    std::vector<std::uint8_t> out;
    out.reserve(kPrefixBytes + kHeaderBytes + payload.size());
    put_u32(out, static_cast<std::uint32_t>(kHeaderBytes + payload.size()));
    out.push_back(tag);
    put_u32(out, sender_field);
    put_u32(out, origin_field);
    put_u64(out, round);
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

struct Header {
    std::uint8_t tag;
    std::uint32_t sender;
    std::uint32_t origin;
    std::uint64_t round;
    std::span<const std::uint8_t> payload;
};

Header decode_body(std::span<const std::uint8_t> body, std::uint8_t want_tag) {
    if (body.size() < kHeaderBytes)
        throw WireError(WireErrc::Truncated, "body shorter than header");
    Header h;
    h.tag = body[0];
    if (h.tag != want_tag)
        throw WireError(WireErrc::BadTag, "unexpected tag " + std::to_string(h.tag));
    h.sender = get_u32(body.data() + 1);
    h.origin = get_u32(body.data() + 5);
    h.round = get_u64(body.data() + 9);
    h.payload = body.subspan(kHeaderBytes);
    return h;
}

std::span<const std::uint8_t> strip_prefix(std::span<const std::uint8_t> frame) {
    if (frame.size() < kPrefixBytes + kHeaderBytes)
        throw WireError(WireErrc::Truncated, "frame shorter than minimum");
    std::uint32_t len = get_u32(frame.data());
    if (frame.size() - kPrefixBytes != len)
        throw WireError(WireErrc::Truncated, "length prefix does not match body size");
    return frame.subspan(kPrefixBytes);
}

} // namespace

std::vector<std::uint8_t> encode_probe(const ProbeMessage& msg) {
    return encode(kTagProbe, msg.sender, msg.sender, msg.round, msg.payload);
}

std::vector<std::uint8_t> encode_echo(const EchoMessage& msg) {
    return encode(kTagEcho, msg.responder, msg.origin_sender, msg.round, msg.payload);
}

ProbeMessage decode_probe_body(std::span<const std::uint8_t> body) {
    Header h = decode_body(body, kTagProbe);
    return ProbeMessage{h.sender, h.round, {h.payload.begin(), h.payload.end()}};
}

EchoMessage decode_echo_body(std::span<const std::uint8_t> body) {
    Header h = decode_body(body, kTagEcho);
    return EchoMessage{h.sender, h.origin, h.round, {h.payload.begin(), h.payload.end()}};
}

ProbeMessage decode_probe(std::span<const std::uint8_t> frame) {
    return decode_probe_body(strip_prefix(frame));
}

EchoMessage decode_echo(std::span<const std::uint8_t> frame) {
    return decode_echo_body(strip_prefix(frame));
}

EchoMessage make_echo(const ProbeMessage& probe, NodeId responder) {
    return EchoMessage{responder, probe.sender, probe.round, probe.payload};
}

} // namespace latmesh::wire
