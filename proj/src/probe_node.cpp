#include "latmesh/probe_node.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "latmesh/clock.hpp"

namespace latmesh {

using nlohmann::json;
namespace fs = std::filesystem;

std::string NodeStatus::to_json() const {
    json j = {{"state", state},
              {"rounds_sent", rounds_sent},
              {"observations", observations},
              {"losses", losses},
              {"late_echoes", late_echoes},
              {"foreign_echoes", foreign_echoes},
              {"pending", pending},
              {"buffer_depth", buffer_depth},
              {"flushed", flushed}};
    return j.dump();
}

NodeStatus NodeStatus::from_json(const std::string& line) {
    json j = json::parse(line);
    NodeStatus s;
    s.state = j.at("state").get<std::string>();
    s.rounds_sent = j.at("rounds_sent").get<std::uint64_t>();
    s.observations = j.at("observations").get<std::uint64_t>();
    s.losses = j.at("losses").get<std::uint64_t>();
    s.late_echoes = j.at("late_echoes").get<std::uint64_t>();
    s.foreign_echoes = j.at("foreign_echoes").get<std::uint64_t>();
    s.pending = j.at("pending").get<std::uint64_t>();
    s.buffer_depth = j.at("buffer_depth").get<std::uint64_t>();
    s.flushed = j.at("flushed").get<std::uint64_t>();
    return s;
}

namespace {

const char* state_name(Node::State s) {
    switch (s) {
        case Node::State::Loaded: return "loaded";
        case Node::State::Running: return "running";
        case Node::State::Draining: return "draining";
        case Node::State::Done: return "done";
    }
    return "?";
}

std::vector<std::uint8_t> make_payload(std::uint32_t bytes, NodeId seed) {
    std::vector<std::uint8_t> p(bytes);
    std::uint64_t x = 0x9e3779b97f4a7c15ULL ^ seed;
    for (auto& b : p) {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        b = static_cast<std::uint8_t>(x);
    }
    return p;
}

} // namespace

Node::Node(ClusterConfig cfg, NodeId self_id, NodeOptions opts)
    : cfg_(std::move(cfg)), self_(self_id), opts_(std::move(opts)) {
    if (!cfg_.find(self_))
        throw InvalidConfig("nodes", "self id " + std::to_string(self_) + " not in config");
    payload_ = make_payload(cfg_.payload_bytes, self_);
    fs::create_directories(opts_.data_dir);
    obs_path_ = opts_.data_dir + "/obs.csv";
    loss_path_ = opts_.data_dir + "/loss.csv";
    observations_ = std::make_shared<ObservationRecorder>();
    losses_ = std::make_shared<LossRecorder>();
    rebuild_peers();
}

Node::~Node() {
    shutdown();
}

void Node::start_serving() {
    const NodeSpec& self = cfg_.at(self_);
    if (opts_.data_listener_fd >= 0) {
        data_listener_ = std::make_unique<net::TcpListener>(
            net::TcpListener::from_fd(opts_.data_listener_fd, self.data_address));
    } else {
        data_listener_ = std::make_unique<net::TcpListener>(
            net::TcpListener::bind(self.data_address.host, self.data_address.port));
    }
    if (opts_.control_listener_fd >= 0) {
        control_listener_ = std::make_unique<net::TcpListener>(
            net::TcpListener::from_fd(opts_.control_listener_fd, self.control_address));
    } else {
        control_listener_ = std::make_unique<net::TcpListener>(
            net::TcpListener::bind(self.control_address.host, self.control_address.port));
    }
    data_ep_ = data_listener_->local_endpoint();
    control_ep_ = control_listener_->local_endpoint();
    control_thread_ = std::thread(&Node::control_loop, this);
    data_thread_ = std::thread(&Node::data_accept_loop, this);
    connector_thread_ = std::thread(&Node::connector_loop, this);
}

void Node::shutdown() {
    {
        std::lock_guard lock(shutdown_mu_);
        if (shut_down_) return;
        shut_down_ = true;
    }
    stop_all_ = true;
    stop_sender_ = true;
    if (data_listener_) data_listener_->close();
    if (control_listener_) control_listener_->close();
    {
        std::lock_guard lock(live_conns_mu_);
        for (auto& w : live_conns_)
            if (auto c = w.lock()) c->shutdown_both();
    }
    for (const auto& p : peers_snapshot()) {
        std::lock_guard plock(p->mu);
        if (p->conn) p->conn->shutdown_both();
    }
    shutdown_cv_.notify_all();
    auto join = [](std::thread& t) {
        if (t.joinable()) t.join();
    };
    join(control_thread_);
    join(data_thread_);
    join(connector_thread_);
    join(run_thread_);
    join(expiry_thread_);
    join(flush_thread_);
    std::vector<std::thread> conn_threads;
    {
        std::lock_guard lock(conn_threads_mu_);
        conn_threads.swap(conn_threads_);
    }
    for (auto& t : conn_threads) join(t);
    obs()->close();
    lss()->close();
}

void Node::wait_shutdown() {
    std::unique_lock lock(shutdown_mu_);
    shutdown_cv_.wait(lock, [&] { return shut_down_; });
}

NodeStatus Node::status() const {
    NodeStatus s;
    s.state = state_name(state_.load());
    s.rounds_sent = rounds_sent_.load();
    auto ob = obs();
    auto lr = lss();
    s.observations = ob->recorded_count();
    s.losses = lr->recorded_count();
    s.late_echoes = late_echoes_.load();
    s.foreign_echoes = foreign_echoes_.load();
    s.pending = pending_.size();
    s.buffer_depth = ob->buffered_count();
    s.flushed = ob->flushed_count();
    return s;
}

std::vector<Node::PeerPtr> Node::peers_snapshot() const {
    std::lock_guard lock(peers_mu_);
    return peers_;
}

bool Node::peers_ready(std::vector<NodeId>* missing) const {
    bool ready = true;
    for (const auto& p : peers_snapshot()) {
        std::lock_guard plock(p->mu);
        if (!p->conn) {
            ready = false;
            if (missing) missing->push_back(p->id);
        }
    }
    return ready;
}

void Node::rebuild_peers() {
    std::lock_guard lock(peers_mu_);
    for (auto& p : peers_) {
        std::lock_guard plock(p->mu);
        if (p->conn) p->conn->shutdown_both();
        p->conn = nullptr;
    }
    peers_.clear();
    for (const auto& n : cfg_.nodes) {
        auto p = std::make_shared<PeerConn>();
        p->id = n.id;
        p->ep = n.data_address;
        peers_.push_back(std::move(p));
    }
}

void Node::track_conn(const net::ConnPtr& conn) {
    std::lock_guard lock(live_conns_mu_);
    live_conns_.erase(std::remove_if(live_conns_.begin(), live_conns_.end(),
                                     [](const auto& w) { return w.expired(); }),
                      live_conns_.end());
    live_conns_.push_back(conn);
}

// ---- control plane ---------------------------------------------------------

void Node::control_loop() {
    while (!stop_all_) {
        net::ConnPtr conn = control_listener_->accept();
        if (!conn) break;
        track_conn(conn);
        std::lock_guard lock(conn_threads_mu_);
        conn_threads_.emplace_back(&Node::serve_control_conn, this, conn);
    }
}

std::string Node::ctl_load(const std::string& config_json) {
    std::lock_guard lock(cmd_mu_);
    State st = state_.load();
    if (st == State::Running || st == State::Draining) return "ERR IllegalState running";
    ClusterConfig cfg;
    try {
        cfg = parse_config(config_json);
    } catch (const std::exception& e) {
        return std::string("ERR InvalidConfig ") + e.what();
    }
    if (!cfg.find(self_)) return "ERR InvalidConfig self id not in config";
    cfg_ = std::move(cfg);
    payload_ = make_payload(cfg_.payload_bytes, self_);
    rebuild_peers();
    state_ = State::Loaded;
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_digest(cfg_)));
    return std::string("OK ") + buf;
}

std::string Node::ctl_start() {
    std::lock_guard lock(cmd_mu_);
    if (state_.load() != State::Loaded) return "ERR IllegalState not loaded";
    std::vector<NodeId> missing;
    if (!peers_ready(&missing)) {
        std::string r = "ERR PeersNotReady";
        for (std::size_t i = 0; i < missing.size(); ++i)
            r += (i == 0 ? " " : ",") + std::to_string(missing[i]);
        return r;
    }
    auto join = [](std::thread& t) {
        if (t.joinable()) t.join();
    };
    join(run_thread_);
    join(expiry_thread_);
    join(flush_thread_);

    {
        std::lock_guard rlock(rec_mu_);
        observations_ = std::make_shared<ObservationRecorder>();
        losses_ = std::make_shared<LossRecorder>();
    }
    obs_sink_ = std::make_unique<FileSink>(obs_path_, kObservationCsvHeader);
    loss_sink_ = std::make_unique<FileSink>(loss_path_, kLossCsvHeader);
    rounds_sent_ = 0;
    late_echoes_ = 0;
    foreign_echoes_ = 0;
    stop_sender_ = false;
    state_ = State::Running;

    run_thread_ = std::thread(&Node::run_loop, this);
    expiry_thread_ = std::thread([this] {
        std::int64_t expiry_us = static_cast<std::int64_t>(cfg_.pending_expiry_s * 1e6);
        while (!stop_all_) {
            State st = state_.load();
            if (st != State::Running && st != State::Draining) break;
            for (const auto& [key, entry] : pending_.expire_older(mono_now_us() - expiry_us))
                lss()->record({key.receiver, key.round, wall_now_us()});
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
    });
    if (cfg_.flush_interval_s > 0) {
        flush_thread_ = std::thread([this] {
            auto interval = std::chrono::duration<double>(cfg_.flush_interval_s);
            auto next = std::chrono::steady_clock::now() + interval;
            while (!stop_all_ && state_.load() == State::Running) {
                if (std::chrono::steady_clock::now() >= next) {
                    obs()->flush(*obs_sink_);
                    lss()->flush(*loss_sink_);
                    next += interval;
                }
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
            }
        });
    }
    return "OK";
}

std::string Node::ctl_stop() {
    std::lock_guard lock(cmd_mu_);
    State st = state_.load();
    if (st == State::Loaded) return "ERR IllegalState never started";
    if (st == State::Done) return "OK";
    stop_sender_ = true;
    std::unique_lock done_lock(done_mu_);
    bool done = done_cv_.wait_for(
        done_lock, std::chrono::duration<double>(cfg_.pending_expiry_s + 60.0),
        [&] { return state_.load() == State::Done; });
    return done ? "OK" : "ERR Timeout drain did not complete";
}

std::string Node::fetch_payload(bool loss) const {
    const std::string& path = loss ? loss_path_ : obs_path_;
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::string(loss ? kLossCsvHeader : kObservationCsvHeader) + "\n";
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void Node::serve_control_conn(net::ConnPtr conn) {
    try {
        while (!stop_all_) {
            auto line_opt = conn->read_line();
            if (!line_opt) break;
            std::string& line = *line_opt;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::string verb = line.substr(0, line.find(' '));
            std::string args =
                line.size() > verb.size() ? line.substr(verb.size() + 1) : std::string();
            std::string reply;
            if (verb == "LOAD") {
                reply = ctl_load(args);
            } else if (verb == "START") {
                reply = ctl_start();
            } else if (verb == "STOP") {
                reply = ctl_stop();
            } else if (verb == "STATUS") {
                reply = status().to_json();
            } else if (verb == "FETCH") {
                State st = state_.load();
                if (st == State::Running || st == State::Draining) {
                    reply = "ERR IllegalState running";
                } else {
                    std::string payload = fetch_payload(args == "LOSS");
                    std::string head = std::to_string(payload.size()) + "\n";
                    if (!conn->write_all(head) || !conn->write_all(payload)) break;
                    continue;
                }
            } else {
                reply = "ERR BadCommand " + verb;
            }
            reply.push_back('\n');
            if (!conn->write_all(reply)) break;
        }
    } catch (const net::NetError&) {
        // connection dropped; nothing to clean up beyond the socket itself
    }
}

// ---- data plane ------------------------------------------------------------

void Node::data_accept_loop() {
    while (!stop_all_) {
        net::ConnPtr conn = data_listener_->accept();
        if (!conn) break;
        track_conn(conn);
        std::lock_guard lock(conn_threads_mu_);
        conn_threads_.emplace_back(&Node::serve_data_conn, this, conn);
    }
}

void Node::serve_data_conn(net::ConnPtr conn) {
    try {
        while (!stop_all_) {
            auto frame = conn->read_frame();
            if (!frame) break;
            on_frame(conn, *frame);
        }
    } catch (const std::exception&) {
    }
}

void Node::on_frame(const net::ConnPtr& conn, const std::vector<std::uint8_t>& frame) {
    if (frame.size() < wire::kPrefixBytes + 1) return;
    std::uint8_t tag = frame[wire::kPrefixBytes];
    if (tag == wire::kTagProbe) {
        wire::ProbeMessage probe = wire::decode_probe(frame);
        wire::EchoMessage echo = wire::make_echo(probe, self_);
        conn->write_all(wire::encode_echo(echo));
    } else if (tag == wire::kTagEcho) {
        on_echo(wire::decode_echo(frame));
    }
    // other tags: ignore (forward-compatible)
}

void Node::on_echo(const wire::EchoMessage& echo) {
    if (echo.origin_sender != self_) {
        ++foreign_echoes_;
        return;
    }
    std::int64_t now = mono_now_us();
    auto entry = pending_.match({echo.responder, echo.round});
    if (!entry) {
        ++late_echoes_;
        return;
    }
    std::int64_t rtt = std::max<std::int64_t>(0, now - entry->send_mono_us);
    obs()->record({self_, echo.responder, echo.round, entry->send_wall_us, rtt});
}

void Node::connector_loop() {
    while (!stop_all_) {
        for (const auto& p : peers_snapshot()) {
            if (stop_all_) break;
            {
                std::lock_guard plock(p->mu);
                if (p->conn) continue;
            }
            try {
                net::ConnPtr conn = net::connect_to(p->ep, 1.0);
                track_conn(conn);
                {
                    std::lock_guard plock(p->mu);
                    p->conn = conn;
                }
                std::lock_guard tlock(conn_threads_mu_);
                conn_threads_.emplace_back(&Node::reader_loop, this, p, conn);
            } catch (const net::NetError&) {
                // peer not up yet; retried next pass
            }
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
}

void Node::reader_loop(PeerPtr peer, net::ConnPtr conn) {
    try {
        while (!stop_all_) {
            auto frame = conn->read_frame();
            if (!frame) break;
            on_frame(conn, *frame);
        }
    } catch (const std::exception&) {
    }
    drop_peer_conn(peer, conn);
}

void Node::drop_peer_conn(const PeerPtr& peer, const net::ConnPtr& conn) {
    std::lock_guard lock(peer->mu);
    if (peer->conn == conn) peer->conn = nullptr;
    conn->shutdown_both();
}

// ---- schedule --------------------------------------------------------------

void Node::run_loop() {
    std::int64_t interval_us = std::llround(1e6 / cfg_.round_rate_hz);
    std::uint64_t total_rounds =
        cfg_.duration_s > 0
            ? static_cast<std::uint64_t>(std::llround(cfg_.duration_s * cfg_.round_rate_hz))
            : std::numeric_limits<std::uint64_t>::max();
    std::int64_t start = mono_now_us();
    for (std::uint64_t round = 0; round < total_rounds && !stop_sender_; ++round) {
        std::int64_t deadline = start + static_cast<std::int64_t>(round) * interval_us;
        std::int64_t now = mono_now_us();
        while (now < deadline && !stop_sender_) {
            std::int64_t wait = std::min<std::int64_t>(deadline - now, 50000);
            std::this_thread::sleep_for(std::chrono::microseconds(wait));
            now = mono_now_us();
        }
        if (stop_sender_) break;
        fire_round(round);
    }
    drain_and_flush();
}

void Node::fire_round(std::uint64_t round) {
    auto frame = wire::encode_probe({self_, round, payload_});
    std::int64_t wall = wall_now_us();
    for (const auto& p : peers_snapshot()) {
        net::ConnPtr conn;
        {
            std::lock_guard plock(p->mu);
            conn = p->conn;
        }
        pending_.insert({p->id, round}, {mono_now_us(), wall});
        bool ok = conn && conn->write_all(frame);
        if (!ok) {
            // failed send is an immediate loss, not a tick failure
            pending_.match({p->id, round});
            lss()->record({p->id, round, wall_now_us()});
            if (conn) drop_peer_conn(p, conn);
        }
    }
    ++rounds_sent_;
}

void Node::drain_and_flush() {
    state_ = State::Draining;
    std::int64_t deadline =
        mono_now_us() + static_cast<std::int64_t>(cfg_.pending_expiry_s * 1e6);
    while (pending_.size() > 0 && mono_now_us() < deadline && !stop_all_)
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    for (const auto& [key, entry] : pending_.expire_older(std::numeric_limits<std::int64_t>::max()))
        lss()->record({key.receiver, key.round, wall_now_us()});
    flush_all();
    {
        std::lock_guard lock(done_mu_);
        state_ = State::Done;
    }
    done_cv_.notify_all();
}

void Node::flush_all() {
    if (opts_.obs_sink_override) {
        obs()->flush(*opts_.obs_sink_override);
    } else if (obs_sink_) {
        obs()->flush(*obs_sink_);
    }
    if (loss_sink_) lss()->flush(*loss_sink_);
}

} // namespace latmesh
