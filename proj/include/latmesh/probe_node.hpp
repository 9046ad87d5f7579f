#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "latmesh/net.hpp"
#include "latmesh/pending.hpp"
#include "latmesh/recorder.hpp"
#include "latmesh/topology.hpp"
#include "latmesh/wire.hpp"

namespace latmesh {

struct NodeStatus {
    std::string state;
    std::uint64_t rounds_sent = 0;
    std::uint64_t observations = 0;
    std::uint64_t losses = 0;
    std::uint64_t late_echoes = 0;
    std::uint64_t foreign_echoes = 0;
    std::uint64_t pending = 0;
    std::uint64_t buffer_depth = 0;
    std::uint64_t flushed = 0;

    std::string to_json() const;
    static NodeStatus from_json(const std::string& line);
};

struct NodeOptions {
    std::string data_dir = "latmesh-data";
    // Pre-bound listening sockets (the sim harness allocates ports up front).
    int data_listener_fd = -1;
    int control_listener_fd = -1;
    // Test override; when set, observation flushes go here instead of the CSV file.
    CsvSink* obs_sink_override = nullptr;
};

/// The per-node daemon. Serves the data plane (probes in, echoes out; echoes
/// in, observations recorded), the control plane (LOAD/START/STOP/STATUS/
/// FETCH), the fixed-interval sender schedule, pending expiry, and flushing.
class Node {
  public:
    enum class State { Loaded, Running, Draining, Done };

    Node(ClusterConfig cfg, NodeId self_id, NodeOptions opts = {});
    ~Node();
    Node(const Node&) = delete;
    Node& operator=(const Node&) = delete;

    /// Binds listeners (unless pre-bound), starts the control server and the
    /// outbound peer connector. Throws net::NetError on bind failure.
    void start_serving();

    /// Stops everything; joins all threads. Safe to call more than once.
    void shutdown();

    /// Blocks until shutdown() is called (from a signal-driven path).
    void wait_shutdown();

    NodeStatus status() const;
    State state() const { return state_.load(); }
    bool peers_ready(std::vector<NodeId>* missing = nullptr) const;

    const std::string& obs_csv_path() const { return obs_path_; }
    const std::string& loss_csv_path() const { return loss_path_; }
    const Endpoint& control_endpoint() const { return control_ep_; }
    const Endpoint& data_endpoint() const { return data_ep_; }

    // Control verbs, also reachable in-process (tests use these directly).
    // Each returns the wire-level reply line (without trailing newline);
    // FETCH replies are handled separately in the control loop.
    std::string ctl_load(const std::string& config_json);
    std::string ctl_start();
    std::string ctl_stop();

  private:
    struct PeerConn {
        NodeId id = 0;
        Endpoint ep;
        std::mutex mu;
        net::ConnPtr conn;
    };
    using PeerPtr = std::shared_ptr<PeerConn>;

    void control_loop();
    void serve_control_conn(net::ConnPtr conn);
    void data_accept_loop();
    void serve_data_conn(net::ConnPtr conn);
    void connector_loop();
    void reader_loop(PeerPtr peer, net::ConnPtr conn);
    void run_loop();
    void fire_round(std::uint64_t round);
    void drain_and_flush();
    void flush_all();
    void on_frame(const net::ConnPtr& conn, const std::vector<std::uint8_t>& frame);
    void on_echo(const wire::EchoMessage& echo);
    void drop_peer_conn(const PeerPtr& peer, const net::ConnPtr& conn);
    std::vector<PeerPtr> peers_snapshot() const;
    void rebuild_peers();
    void track_conn(const net::ConnPtr& conn);
    std::string fetch_payload(bool loss) const;

    ClusterConfig cfg_;
    NodeId self_;
    NodeOptions opts_;
    std::vector<std::uint8_t> payload_;

    std::atomic<State> state_{State::Loaded};
    std::atomic<bool> stop_all_{false};
    std::atomic<bool> stop_sender_{false};

    std::unique_ptr<net::TcpListener> data_listener_;
    std::unique_ptr<net::TcpListener> control_listener_;
    Endpoint data_ep_;
    Endpoint control_ep_;

    std::vector<PeerPtr> peers_;
    mutable std::mutex peers_mu_; // guards peers_ vector shape (not each conn)

    PendingTable pending_;
    // Recreated on every START so that counters and files describe one run.
    // Accessed through obs()/lss() because STATUS and stray late echoes can
    // race the swap.
    std::shared_ptr<ObservationRecorder> observations_;
    std::shared_ptr<LossRecorder> losses_;
    mutable std::mutex rec_mu_;
    std::shared_ptr<ObservationRecorder> obs() const {
        std::lock_guard lock(rec_mu_);
        return observations_;
    }
    std::shared_ptr<LossRecorder> lss() const {
        std::lock_guard lock(rec_mu_);
        return losses_;
    }
    std::unique_ptr<FileSink> obs_sink_;
    std::unique_ptr<FileSink> loss_sink_;
    std::string obs_path_;
    std::string loss_path_;

    std::atomic<std::uint64_t> rounds_sent_{0};
    std::atomic<std::uint64_t> late_echoes_{0};
    std::atomic<std::uint64_t> foreign_echoes_{0};
    std::atomic<std::uint64_t> loss_count_{0};

    std::thread control_thread_;
    std::thread data_thread_;
    std::thread connector_thread_;
    std::thread run_thread_;
    std::thread expiry_thread_;
    std::thread flush_thread_;
    std::vector<std::thread> conn_threads_;
    std::mutex conn_threads_mu_;
    std::vector<std::weak_ptr<net::TcpConn>> live_conns_;
    std::mutex live_conns_mu_;

    mutable std::mutex cmd_mu_; // serializes control commands / state transitions
    std::mutex done_mu_;
    std::condition_variable done_cv_;
    std::mutex shutdown_mu_;
    std::condition_variable shutdown_cv_;
    bool shut_down_ = false;
};

} // namespace latmesh
