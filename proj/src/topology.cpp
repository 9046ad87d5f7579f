#include "latmesh/topology.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <json.hpp>

namespace latmesh {

using nlohmann::json;

std::string Endpoint::str() const {
    return host + ":" + std::to_string(port);
}

Endpoint Endpoint::parse(const std::string& text) {
    auto pos = text.rfind(':');
    if (pos == std::string::npos || pos == 0 || pos + 1 == text.size())
        throw MalformedConfig("bad endpoint '" + text + "', expected host:port");
    Endpoint ep;
    ep.host = text.substr(0, pos);
    int port = 0;
    try {
        port = std::stoi(text.substr(pos + 1));
    } catch (const std::exception&) {
        throw MalformedConfig("bad port in endpoint '" + text + "'");
    }
    if (port < 0 || port > 65535)
        throw MalformedConfig("port out of range in endpoint '" + text + "'");
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

const NodeSpec* ClusterConfig::find(NodeId id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const NodeSpec& ClusterConfig::at(NodeId id) const {
    const NodeSpec* n = find(id);
    if (!n) throw InvalidConfig("nodes", "unknown node id " + std::to_string(id));
    return *n;
}

const char* to_string(PairClass c) {
    switch (c) {
        case PairClass::SelfLoop: return "Self Loop";
        case PairClass::SameSubnet: return "Same Subnet";
        case PairClass::CrossSubnet: return "Cross Subnet";
        case PairClass::CrossAZ: return "Cross AZ";
        case PairClass::CrossRegion: return "Cross Region";
    }
    return "?";
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw InvalidConfig(where, "unknown key '" + it.key() + "'");
}

std::string require_string(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw InvalidConfig(where, std::string("missing '") + key + "'");
    if (!j.at(key).is_string()) throw InvalidConfig(where, std::string("'") + key + "' must be a string");
    return j.at(key).get<std::string>();
}

void validate(const ClusterConfig& cfg) {
    if (cfg.nodes.empty()) throw InvalidConfig("nodes", "at least one node required");
    if (!(cfg.round_rate_hz > 0)) throw InvalidConfig("round_rate_hz", "must be > 0");
    if (cfg.flush_interval_s < 0) throw InvalidConfig("flush_interval_s", "must be >= 0");
    if (cfg.duration_s < 0) throw InvalidConfig("duration_s", "must be >= 0");
    if (!(cfg.pending_expiry_s > 10.0 / cfg.round_rate_hz))
        throw InvalidConfig("pending_expiry_s", "must exceed 10 round intervals");
    std::set<NodeId> ids;
    std::set<std::string> aliases;
    for (const auto& n : cfg.nodes) {
        std::string where = "nodes[" + std::to_string(n.id) + "]";
        if (!ids.insert(n.id).second)
            throw InvalidConfig("nodes", "duplicate node id " + std::to_string(n.id));
        if (!n.alias.empty() && !aliases.insert(n.alias).second)
            throw InvalidConfig("nodes", "duplicate alias '" + n.alias + "'");
        if (n.data_address == n.control_address)
            throw InvalidConfig(where + ".control_address",
                                "must differ from data_address");
        if (n.label.cloud.empty() || n.label.region.empty() || n.label.az.empty() ||
            n.label.subnet.empty())
            throw InvalidConfig(where + ".label", "cloud/region/az/subnet must be non-empty");
    }
}

} // namespace

ClusterConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw MalformedConfig(e.what());
    }
    if (!j.is_object()) throw MalformedConfig("top-level value must be an object");
    reject_unknown_keys(j,
                        {"nodes", "round_rate_hz", "payload_bytes", "flush_interval_s",
                         "pending_expiry_s", "duration_s"},
                        "config");
    ClusterConfig cfg;
    if (!j.contains("nodes") || !j.at("nodes").is_array())
        throw InvalidConfig("nodes", "missing or not an array");
    if (!j.contains("round_rate_hz")) throw InvalidConfig("round_rate_hz", "missing");
    cfg.round_rate_hz = j.at("round_rate_hz").get<double>();
    if (j.contains("payload_bytes")) {
        auto pb = j.at("payload_bytes").get<std::int64_t>();
        if (pb < 0) throw InvalidConfig("payload_bytes", "must be >= 0");
        cfg.payload_bytes = static_cast<std::uint32_t>(pb);
    }
    if (j.contains("flush_interval_s")) cfg.flush_interval_s = j.at("flush_interval_s").get<double>();
    if (j.contains("pending_expiry_s")) cfg.pending_expiry_s = j.at("pending_expiry_s").get<double>();
    if (j.contains("duration_s")) cfg.duration_s = j.at("duration_s").get<double>();

    for (const auto& nj : j.at("nodes")) {
        if (!nj.is_object()) throw MalformedConfig("node entry must be an object");
        reject_unknown_keys(nj,
                            {"id", "alias", "data_address", "control_address", "cloud",
                             "region", "az", "subnet"},
                            "node");
        NodeSpec spec;
        if (!nj.contains("id")) throw InvalidConfig("node.id", "missing");
        auto id = nj.at("id").get<std::int64_t>();
        if (id < 0 || id > 0xffffffffLL) throw InvalidConfig("node.id", "out of u32 range");
        spec.id = static_cast<NodeId>(id);
        std::string where = "nodes[" + std::to_string(spec.id) + "]";
        if (nj.contains("alias")) spec.alias = require_string(nj, "alias", where);
        spec.data_address = Endpoint::parse(require_string(nj, "data_address", where));
        spec.control_address = Endpoint::parse(require_string(nj, "control_address", where));
        spec.label.cloud = require_string(nj, "cloud", where);
        spec.label.region = require_string(nj, "region", where);
        spec.label.az = require_string(nj, "az", where);
        spec.label.subnet = require_string(nj, "subnet", where);
        cfg.nodes.push_back(std::move(spec));
    }
    validate(cfg);
    return cfg;
}

std::string dump_config(const ClusterConfig& cfg) {
    json nodes = json::array();
    for (const auto& n : cfg.nodes) {
        nodes.push_back({{"id", n.id},
                         {"alias", n.alias},
                         {"data_address", n.data_address.str()},
                         {"control_address", n.control_address.str()},
                         {"cloud", n.label.cloud},
                         {"region", n.label.region},
                         {"az", n.label.az},
                         {"subnet", n.label.subnet}});
    }
    json j = {{"nodes", nodes},
              {"round_rate_hz", cfg.round_rate_hz},
              {"payload_bytes", cfg.payload_bytes},
              {"flush_interval_s", cfg.flush_interval_s},
              {"pending_expiry_s", cfg.pending_expiry_s},
              {"duration_s", cfg.duration_s}};
    return j.dump();
}

std::uint64_t config_digest(const ClusterConfig& cfg) {
    std::string text = dump_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

PairClass classify_pair(const TopologyLabel& a, const TopologyLabel& b, bool same_node) {
    if (same_node) return PairClass::SelfLoop;
    if (a.cloud != b.cloud || a.region != b.region) return PairClass::CrossRegion;
    if (a.az != b.az) return PairClass::CrossAZ;
    if (a.subnet != b.subnet) return PairClass::CrossSubnet;
    return PairClass::SameSubnet;
}

double estimate_traffic(const ClusterConfig& cfg) {
    return cfg.round_rate_hz * static_cast<double>(cfg.payload_bytes) *
           static_cast<double>(cfg.nodes.size()) * 2.0;
}

std::vector<QuorumGroup> quorum_groups(const ClusterConfig& cfg) {
    std::vector<QuorumGroup> out;

    // Same-subnet triples: first three nodes per subnet, config order.
    std::vector<std::pair<std::string, std::vector<NodeId>>> subnets;
    for (const auto& n : cfg.nodes) {
        std::string key = n.label.cloud + "/" + n.label.region + "/" + n.label.az + "/" +
                          n.label.subnet;
        auto it = std::find_if(subnets.begin(), subnets.end(),
                               [&](const auto& s) { return s.first == key; });
        if (it == subnets.end())
            subnets.push_back({key, {n.id}});
        else
            it->second.push_back(n.id);
    }
    for (const auto& [key, ids] : subnets) {
        if (ids.size() >= 3)
            out.push_back({"same-subnet " + key, {ids[0], ids[1], ids[2]}});
    }

    // Cross-AZ representative triple per region with >=3 AZs: the first node
    // of each of the first three AZs, config order.
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, NodeId>>>> regions;
    for (const auto& n : cfg.nodes) {
        std::string key = n.label.cloud + "/" + n.label.region;
        auto it = std::find_if(regions.begin(), regions.end(),
                               [&](const auto& r) { return r.first == key; });
        if (it == regions.end()) {
            regions.push_back({key, {{n.label.az, n.id}}});
        } else {
            bool seen = std::any_of(it->second.begin(), it->second.end(),
                                    [&](const auto& p) { return p.first == n.label.az; });
            if (!seen) it->second.push_back({n.label.az, n.id});
        }
    }
    for (const auto& [key, azs] : regions) {
        if (azs.size() >= 3)
            out.push_back({"cross-az " + key, {azs[0].second, azs[1].second, azs[2].second}});
    }
    return out;
}

} // namespace latmesh
