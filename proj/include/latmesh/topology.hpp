#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace latmesh {

using NodeId = std::uint32_t;

/// Placement of a node in the cluster. All four fields must be non-empty.
struct TopologyLabel {
    std::string cloud;
    std::string region;
    std::string az;
    std::string subnet;

    bool operator==(const TopologyLabel&) const = default;
};

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    bool operator==(const Endpoint&) const = default;
    std::string str() const;

    /// Parses "host:port". IPv6 literals are not supported.
    static Endpoint parse(const std::string& text);
};

struct NodeSpec {
    NodeId id = 0;
    std::string alias; // display name, e.g. "1.3"
    Endpoint data_address;
    Endpoint control_address;
    TopologyLabel label;
};

struct ClusterConfig {
    std::vector<NodeSpec> nodes;
    double round_rate_hz = 100.0;
    std::uint32_t payload_bytes = 1024;
    double flush_interval_s = 30.0; // 0 = memory-only until shutdown
    double pending_expiry_s = 120.0;
    double duration_s = 0.0; // 0 = run until STOP

    const NodeSpec* find(NodeId id) const;
    const NodeSpec& at(NodeId id) const; // throws InvalidConfig if absent
};

enum class PairClass { SelfLoop, SameSubnet, CrossSubnet, CrossAZ, CrossRegion };

const char* to_string(PairClass c);

/// Syntax error in a config document.
struct MalformedConfig : std::runtime_error {
    explicit MalformedConfig(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid config that violates an invariant; names the field.
struct InvalidConfig : std::runtime_error {
    std::string field;
    InvalidConfig(std::string field_, const std::string& what)
        : std::runtime_error(field_ + ": " + what), field(std::move(field_)) {}
};

ClusterConfig parse_config(const std::string& text);

/// Canonical single-line JSON form; parse_config(dump_config(c)) == c.
std::string dump_config(const ClusterConfig& cfg);

/// FNV-1a over the canonical dump; nodes agree on a config iff digests match.
std::uint64_t config_digest(const ClusterConfig& cfg);

PairClass classify_pair(const TopologyLabel& a, const TopologyLabel& b, bool same_node);

/// Payload bytes per second, per direction, per node. The node's own probes
/// plus its echoes of every peer's probes; self counts as a peer. Framing
/// overhead excluded.
double estimate_traffic(const ClusterConfig& cfg);

struct QuorumGroup {
    std::string label;
    std::vector<NodeId> nodes;
};

/// One triple per subnet with >=3 nodes, plus one representative cross-AZ
/// triple per region with >=3 AZs (first node of each AZ in config order).
std::vector<QuorumGroup> quorum_groups(const ClusterConfig& cfg);

} // namespace latmesh
