#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "latmesh/analysis.hpp"
#include "latmesh/controller.hpp"
#include "latmesh/net.hpp"
#include "latmesh/probe_node.hpp"
#include "latmesh/topology.hpp"

namespace latmesh::sim {

struct SimError : std::runtime_error {
    explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

struct UnknownLink : SimError {
    UnknownLink(NodeId src, NodeId dst)
        : SimError("no delay model for link " + std::to_string(src) + "->" +
                   std::to_string(dst)) {}
};

struct JitterSpec {
    enum class Kind { None, Uniform, Spike } kind = Kind::None;
    // uniform
    std::int64_t lo_us = 0;
    std::int64_t hi_us = 0;
    // spike
    double period_s = 0.0;
    std::int64_t magnitude_us = 0;
    double width_s = 0.0;
};

struct LinkSpec {
    std::int64_t base_delay_us = 0;
    JitterSpec jitter;
};

/// Per-ordered-pair one-way delays. Given (model, seed) the delay sequence of
/// every link is reproducible.
struct LinkModel {
    std::uint64_t seed = 0;
    double rate_hz = 100.0; // maps sequence index to time for spike jitter
    std::optional<LinkSpec> default_link;
    std::map<std::pair<NodeId, NodeId>, LinkSpec> links;

    static LinkModel parse(const std::string& json_text);
    std::string dump() const;

    /// Uniform one-way delay on every ordered pair, no jitter.
    static LinkModel uniform(std::int64_t base_delay_us, std::uint64_t seed = 0);
    void set_link(NodeId src, NodeId dst, std::int64_t base_us,
                  JitterSpec jitter = {});
    /// Sets both directions.
    void set_pair(NodeId a, NodeId b, std::int64_t base_us, JitterSpec jitter = {});
};

/// Deterministic one-way delay for the sequence_index-th message on a link.
std::int64_t sample_delay(const LinkModel& model, NodeId src, NodeId dst,
                          std::uint64_t sequence_index);

/// Single ordered timer queue delivering delayed frames; preserves per-
/// destination FIFO order.
class DelayScheduler {
  public:
    DelayScheduler();
    ~DelayScheduler();
    void schedule(std::int64_t deliver_mono_us, net::ConnPtr dst,
                  std::vector<std::uint8_t> frame);
    void stop(); // drops anything not yet due

  private:
    struct Item {
        std::int64_t due_us;
        std::uint64_t seq;
        net::ConnPtr dst;
        std::vector<std::uint8_t> frame;
        bool operator>(const Item& other) const {
            if (due_us != other.due_us) return due_us > other.due_us;
            return seq > other.seq;
        }
    };
    void run();
    std::mutex mu_;
    std::condition_variable cv_;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
    std::map<const net::TcpConn*, std::int64_t> last_due_;
    std::uint64_t next_seq_ = 0;
    bool stopped_ = false;
    std::thread thread_;
};

/// Accepts in place of one node's data address and relays frames to the real
/// node, injecting the model's delay on each direction. Frame headers carry
/// the node ids, which select the link.
class DelayProxy {
  public:
    DelayProxy(net::TcpListener listener, Endpoint target, NodeId node_id,
               const LinkModel& model, DelayScheduler& scheduler);
    ~DelayProxy();
    void stop();

  private:
    void accept_loop();
    void pump(net::ConnPtr from, net::ConnPtr to, bool inbound);
    std::int64_t next_link_index(NodeId src, NodeId dst);

    net::TcpListener listener_;
    Endpoint target_;
    NodeId node_id_;
    const LinkModel& model_;
    DelayScheduler& scheduler_;
    std::mutex mu_;
    std::map<std::pair<NodeId, NodeId>, std::uint64_t> link_seq_;
    std::vector<std::weak_ptr<net::TcpConn>> conns_;
    std::vector<std::thread> threads_;
    std::thread accept_thread_;
    std::atomic<bool> stopped_{false};
};

struct VirtualClusterResult {
    ClusterConfig cfg;
    analysis::Dataset dataset;
    controller::StatusMap final_status;
    std::string out_dir;
};

/// Loopback config with ephemeral ports; node ids 1..n, all in one subnet
/// unless labels are supplied (one per node).
ClusterConfig make_loopback_config(std::size_t n_nodes, double rate_hz,
                                   std::uint32_t payload_bytes, double duration_s,
                                   double pending_expiry_s = 15.0,
                                   double flush_interval_s = 0.0,
                                   std::vector<TopologyLabel> labels = {});

/// Hosts one real probe node per NodeSpec in-process, interposes the delay
/// model on every data-plane message, runs LOAD/START/wait/STOP/FETCH, and
/// loads the fetched dataset. Port fields in cfg are overwritten with the
/// actually bound ephemeral ports.
VirtualClusterResult run_virtual_cluster(ClusterConfig cfg, const LinkModel& model,
                                         const std::string& out_dir);

} // namespace latmesh::sim
