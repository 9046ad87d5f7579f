#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "latmesh/topology.hpp"

namespace latmesh::wire {

// Frame layout, byte-exact:
//   [len: u32 BE]  bytes after the prefix
//   [tag: u8]      0x01 probe, 0x02 echo
//   [sender: u32 BE]   probe: sender id; echo: responder id
//   [origin: u32 BE]   originating sender id (== sender for probes)
//   [round: u64 BE]
//   [payload ...]
inline constexpr std::uint8_t kTagProbe = 0x01;
inline constexpr std::uint8_t kTagEcho = 0x02;
inline constexpr std::size_t kHeaderBytes = 17; // tag + sender + origin + round
inline constexpr std::size_t kPrefixBytes = 4;

struct ProbeMessage {
    NodeId sender = 0;
    std::uint64_t round = 0;
    std::vector<std::uint8_t> payload;

    bool operator==(const ProbeMessage&) const = default;
};

struct EchoMessage {
    NodeId responder = 0;
    NodeId origin_sender = 0;
    std::uint64_t round = 0;
    std::vector<std::uint8_t> payload;

    bool operator==(const EchoMessage&) const = default;
};

enum class WireErrc { BadTag, Truncated, PayloadTooLarge };

struct WireError : std::runtime_error {
    WireErrc code;
    WireError(WireErrc code_, const std::string& what)
        : std::runtime_error(what), code(code_) {}
};

// Encoders emit the complete frame including the length prefix.
std::vector<std::uint8_t> encode_probe(const ProbeMessage& msg);
std::vector<std::uint8_t> encode_echo(const EchoMessage& msg);

// Decoders take a complete frame (prefix + body).
ProbeMessage decode_probe(std::span<const std::uint8_t> frame);
EchoMessage decode_echo(std::span<const std::uint8_t> frame);

// Body-level decoders for transports that strip the prefix while reading.
ProbeMessage decode_probe_body(std::span<const std::uint8_t> body);
EchoMessage decode_echo_body(std::span<const std::uint8_t> body);

EchoMessage make_echo(const ProbeMessage& probe, NodeId responder);

} // namespace latmesh::wire
