#pragma once

#include <map>
#include <string>
#include <vector>

#include "latmesh/probe_node.hpp"
#include "latmesh/topology.hpp"

namespace latmesh::controller {

struct NodeResult {
    bool ok = false;
    std::string detail; // digest for LOAD, error text otherwise
};

using ResultMap = std::map<NodeId, NodeResult>;
using StatusMap = std::map<NodeId, NodeStatus>;

struct FetchEntry {
    NodeId node = 0;
    std::string obs_file;
    std::string loss_file;
    std::uint64_t obs_rows = 0;
    std::uint64_t loss_rows = 0;
    std::uint64_t obs_bytes = 0;
    std::uint64_t loss_bytes = 0;
};

struct Manifest {
    std::vector<FetchEntry> entries;
    std::string to_json() const;
};

/// Sends LOAD to every node concurrently. ok=true only when the node's
/// digest matches the local digest of the same canonical config.
ResultMap push_config(const ClusterConfig& cfg);

/// All-or-nothing: refuses to send START unless every node is reachable and
/// loaded, so an experiment never begins with a partial mesh.
ResultMap start_all(const ClusterConfig& cfg);

ResultMap stop_all(const ClusterConfig& cfg, double timeout_s = 300.0);

StatusMap status_all(const ClusterConfig& cfg);

/// Fetches node_<id>_obs.csv / node_<id>_loss.csv into out_dir plus
/// manifest.json. Verifies the advertised byte count (one retry on a short
/// read) and that obs row counts match each node's STATUS.
Manifest fetch_all(const ClusterConfig& cfg, const std::string& out_dir);

bool all_ok(const ResultMap& results);

} // namespace latmesh::controller
