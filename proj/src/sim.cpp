#include "latmesh/sim.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "latmesh/clock.hpp"
#include "latmesh/wire.hpp"

namespace latmesh::sim {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- link model ------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

JitterSpec parse_jitter(const json& j) {
    JitterSpec spec;
    std::string type = j.at("type").get<std::string>();
    if (type == "none") {
        spec.kind = JitterSpec::Kind::None;
    } else if (type == "uniform") {
        spec.kind = JitterSpec::Kind::Uniform;
        spec.lo_us = j.at("lo_us").get<std::int64_t>();
        spec.hi_us = j.at("hi_us").get<std::int64_t>();
        if (spec.lo_us < 0 || spec.hi_us < spec.lo_us)
            throw SimError("uniform jitter requires 0 <= lo_us <= hi_us");
    } else if (type == "spike") {
        spec.kind = JitterSpec::Kind::Spike;
        spec.period_s = j.at("period_s").get<double>();
        spec.magnitude_us = j.at("magnitude_us").get<std::int64_t>();
        spec.width_s = j.at("width_s").get<double>();
        if (spec.period_s <= 0 || spec.width_s < 0 || spec.magnitude_us < 0)
            throw SimError("bad spike jitter parameters");
    } else {
        throw SimError("unknown jitter type '" + type + "'");
    }
    return spec;
}

json dump_jitter(const JitterSpec& spec) {
    switch (spec.kind) {
        case JitterSpec::Kind::None:
            return {{"type", "none"}};
        case JitterSpec::Kind::Uniform:
            return {{"type", "uniform"}, {"lo_us", spec.lo_us}, {"hi_us", spec.hi_us}};
        case JitterSpec::Kind::Spike:
            return {{"type", "spike"},
                    {"period_s", spec.period_s},
                    {"magnitude_us", spec.magnitude_us},
                    {"width_s", spec.width_s}};
    }
    return {};
}

LinkSpec parse_link_spec(const json& j) {
    LinkSpec spec;
    spec.base_delay_us = j.at("base_us").get<std::int64_t>();
    if (spec.base_delay_us < 0) throw SimError("base_us must be >= 0");
    if (j.contains("jitter")) spec.jitter = parse_jitter(j.at("jitter"));
    return spec;
}

} // namespace

LinkModel LinkModel::parse(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SimError(std::string("bad model json: ") + e.what());
    }
    LinkModel model;
    if (j.contains("seed")) model.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("rate_hz")) model.rate_hz = j.at("rate_hz").get<double>();
    if (j.contains("default")) model.default_link = parse_link_spec(j.at("default"));
    if (j.contains("links")) {
        for (const auto& lj : j.at("links")) {
            NodeId src = lj.at("src").get<NodeId>();
            NodeId dst = lj.at("dst").get<NodeId>();
            model.links[{src, dst}] = parse_link_spec(lj);
        }
    }
    return model;
}

std::string LinkModel::dump() const {
    json j;
    j["seed"] = seed;
    j["rate_hz"] = rate_hz;
    auto dump_link = [](const LinkSpec& spec) {
        return json{{"base_us", spec.base_delay_us}, {"jitter", dump_jitter(spec.jitter)}};
    };
    if (default_link) j["default"] = dump_link(*default_link);
    json arr = json::array();
    for (const auto& [key, spec] : links) {
        json lj = dump_link(spec);
        lj["src"] = key.first;
        lj["dst"] = key.second;
        arr.push_back(lj);
    }
    j["links"] = arr;
    return j.dump(2);
}

LinkModel LinkModel::uniform(std::int64_t base_delay_us, std::uint64_t seed) {
    LinkModel model;
    model.seed = seed;
    model.default_link = LinkSpec{base_delay_us, {}};
    return model;
}

void LinkModel::set_link(NodeId src, NodeId dst, std::int64_t base_us, JitterSpec jitter) {
    links[{src, dst}] = LinkSpec{base_us, jitter};
}

void LinkModel::set_pair(NodeId a, NodeId b, std::int64_t base_us, JitterSpec jitter) {
    set_link(a, b, base_us, jitter);
    set_link(b, a, base_us, jitter);
}

std::int64_t sample_delay(const LinkModel& model, NodeId src, NodeId dst,
                          std::uint64_t sequence_index) {
    const LinkSpec* spec = nullptr;
    auto it = model.links.find({src, dst});
    if (it != model.links.end())
        spec = &it->second;
    else if (model.default_link)
        spec = &*model.default_link;
    else
        throw UnknownLink(src, dst);

    std::int64_t delay = spec->base_delay_us;
    switch (spec->jitter.kind) {
        case JitterSpec::Kind::None:
            break;
        case JitterSpec::Kind::Uniform: {
            std::uint64_t h = splitmix64(model.seed ^ splitmix64((std::uint64_t(src) << 32) ^ dst) ^
                                         splitmix64(sequence_index));
            auto span = static_cast<std::uint64_t>(spec->jitter.hi_us - spec->jitter.lo_us + 1);
            delay += spec->jitter.lo_us + static_cast<std::int64_t>(h % span);
            break;
        }
        case JitterSpec::Kind::Spike: {
            double t = static_cast<double>(sequence_index) / model.rate_hz;
            double phase = std::fmod(t, spec->jitter.period_s);
            if (phase < spec->jitter.width_s) delay += spec->jitter.magnitude_us;
            break;
        }
    }
    return delay;
}

// ---- scheduler -------------------------------------------------------------

DelayScheduler::DelayScheduler() : thread_(&DelayScheduler::run, this) {}

DelayScheduler::~DelayScheduler() {
    stop();
}

void DelayScheduler::schedule(std::int64_t deliver_mono_us, net::ConnPtr dst,
                              std::vector<std::uint8_t> frame) {
    std::lock_guard lock(mu_);
    if (stopped_) return;
    // FIFO per destination even when delays would reorder
    auto& last = last_due_[dst.get()];
    deliver_mono_us = std::max(deliver_mono_us, last);
    last = deliver_mono_us;
    queue_.push({deliver_mono_us, next_seq_++, std::move(dst), std::move(frame)});
    cv_.notify_one();
}

void DelayScheduler::stop() {
    {
        std::lock_guard lock(mu_);
        if (stopped_) return;
        stopped_ = true;
        while (!queue_.empty()) queue_.pop();
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
}

void DelayScheduler::run() {
    std::unique_lock lock(mu_);
    while (!stopped_) {
        if (queue_.empty()) {
            cv_.wait(lock);
            continue;
        }
        std::int64_t now = mono_now_us();
        if (queue_.top().due_us > now) {
            cv_.wait_for(lock, std::chrono::microseconds(queue_.top().due_us - now));
            continue;
        }
        Item item = queue_.top();
        queue_.pop();
        lock.unlock();
        item.dst->write_all(item.frame); // peer gone: drop silently
        lock.lock();
    }
}

// ---- proxy -----------------------------------------------------------------

DelayProxy::DelayProxy(net::TcpListener listener, Endpoint target, NodeId node_id,
                       const LinkModel& model, DelayScheduler& scheduler)
    : listener_(std::move(listener)),
      target_(std::move(target)),
      node_id_(node_id),
      model_(model),
      scheduler_(scheduler) {
    accept_thread_ = std::thread(&DelayProxy::accept_loop, this);
}

DelayProxy::~DelayProxy() {
    stop();
}

void DelayProxy::stop() {
    if (stopped_.exchange(true)) return;
    listener_.close();
    {
        std::lock_guard lock(mu_);
        for (auto& w : conns_)
            if (auto c = w.lock()) c->shutdown_both();
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(mu_);
        threads.swap(threads_);
    }
    for (auto& t : threads)
        if (t.joinable()) t.join();
}

std::int64_t DelayProxy::next_link_index(NodeId src, NodeId dst) {
    std::lock_guard lock(mu_);
    return static_cast<std::int64_t>(link_seq_[{src, dst}]++);
}

void DelayProxy::accept_loop() {
    while (!stopped_) {
        net::ConnPtr inbound = listener_.accept();
        if (!inbound) break;
        net::ConnPtr outbound;
        try {
            outbound = net::connect_to(target_, 5.0);
        } catch (const net::NetError&) {
            continue; // node not up; peer will retry
        }
        std::lock_guard lock(mu_);
        conns_.push_back(inbound);
        conns_.push_back(outbound);
        threads_.emplace_back(&DelayProxy::pump, this, inbound, outbound, true);
        threads_.emplace_back(&DelayProxy::pump, this, outbound, inbound, false);
    }
}

void DelayProxy::pump(net::ConnPtr from, net::ConnPtr to, bool inbound) {
    try {
        while (!stopped_) {
            auto frame = from->read_frame();
            if (!frame) break;
            if (frame->size() < wire::kPrefixBytes + wire::kHeaderBytes) break;
            const std::uint8_t* body = frame->data() + wire::kPrefixBytes;
            auto field_id = [&](std::size_t off) {
                return (NodeId(body[off]) << 24) | (NodeId(body[off + 1]) << 16) |
                       (NodeId(body[off + 2]) << 8) | NodeId(body[off + 3]);
            };
            // Toward the node the frames are probes (sender field selects the
            // link); back out they are this node's echoes toward the origin.
            NodeId src = inbound ? field_id(1) : node_id_;
            NodeId dst = inbound ? node_id_ : field_id(5);
            std::int64_t idx = next_link_index(src, dst);
            std::int64_t delay =
                sample_delay(model_, src, dst, static_cast<std::uint64_t>(idx));
            scheduler_.schedule(mono_now_us() + delay, to, std::move(*frame));
        }
    } catch (const std::exception&) {
    }
    from->shutdown_both();
    to->shutdown_both();
}

// ---- virtual cluster -------------------------------------------------------

ClusterConfig make_loopback_config(std::size_t n_nodes, double rate_hz,
                                   std::uint32_t payload_bytes, double duration_s,
                                   double pending_expiry_s, double flush_interval_s,
                                   std::vector<TopologyLabel> labels) {
    ClusterConfig cfg;
    cfg.round_rate_hz = rate_hz;
    cfg.payload_bytes = payload_bytes;
    cfg.duration_s = duration_s;
    cfg.pending_expiry_s = pending_expiry_s;
    cfg.flush_interval_s = flush_interval_s;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        NodeSpec spec;
        spec.id = static_cast<NodeId>(i + 1);
        spec.alias = "1." + std::to_string(i + 1);
        spec.data_address = {"127.0.0.1", 0};    // filled by run_virtual_cluster
        spec.control_address = {"127.0.0.1", 0};
        spec.label = labels.empty() ? TopologyLabel{"sim", "east1", "az1", "subnet1"}
                                    : labels.at(i);
        cfg.nodes.push_back(std::move(spec));
    }
    return cfg;
}

VirtualClusterResult run_virtual_cluster(ClusterConfig cfg, const LinkModel& model,
                                         const std::string& out_dir) {
    fs::create_directories(out_dir);

    struct NodeSlot {
        net::TcpListener data{net::TcpListener::bind("127.0.0.1", 0)};
        net::TcpListener control{net::TcpListener::bind("127.0.0.1", 0)};
        net::TcpListener proxy{net::TcpListener::bind("127.0.0.1", 0)};
    };
    std::vector<std::unique_ptr<NodeSlot>> slots;
    for (std::size_t i = 0; i < cfg.nodes.size(); ++i) {
        auto slot = std::make_unique<NodeSlot>();
        // advertised data address is the proxy; control is direct
        cfg.nodes[i].data_address = slot->proxy.local_endpoint();
        cfg.nodes[i].control_address = slot->control.local_endpoint();
        slots.push_back(std::move(slot));
    }

    DelayScheduler scheduler;
    std::vector<std::unique_ptr<DelayProxy>> proxies;
    std::vector<std::unique_ptr<Node>> nodes;
    for (std::size_t i = 0; i < cfg.nodes.size(); ++i) {
        proxies.push_back(std::make_unique<DelayProxy>(
            std::move(slots[i]->proxy), slots[i]->data.local_endpoint(), cfg.nodes[i].id,
            model, scheduler));
        NodeOptions opts;
        opts.data_dir = out_dir + "/node_" + std::to_string(cfg.nodes[i].id);
        opts.data_listener_fd = slots[i]->data.release();
        opts.control_listener_fd = slots[i]->control.release();
        auto node = std::make_unique<Node>(cfg, cfg.nodes[i].id, opts);
        node->start_serving();
        nodes.push_back(std::move(node));
    }

    auto push = controller::push_config(cfg);
    if (!controller::all_ok(push)) throw SimError("push_config failed");
    // wait for the full mesh before START
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
    while (true) {
        bool ready = true;
        for (const auto& node : nodes)
            if (!node->peers_ready()) ready = false;
        if (ready) break;
        if (std::chrono::steady_clock::now() > deadline)
            throw SimError("mesh did not come up in 30 s");
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    auto start = controller::start_all(cfg);
    if (!controller::all_ok(start)) throw SimError("start_all failed");

    std::this_thread::sleep_for(std::chrono::duration<double>(cfg.duration_s));
    auto stop = controller::stop_all(cfg, cfg.pending_expiry_s + 120.0);
    if (!controller::all_ok(stop)) throw SimError("stop_all failed");

    VirtualClusterResult result;
    result.cfg = cfg;
    result.out_dir = out_dir;
    result.final_status = controller::status_all(cfg);
    controller::Manifest manifest = controller::fetch_all(cfg, out_dir);
    std::vector<std::string> files;
    for (const auto& entry : manifest.entries) files.push_back(entry.obs_file);
    result.dataset = analysis::load_observations(files, cfg);

    for (auto& node : nodes) node->shutdown();
    for (auto& proxy : proxies) proxy->stop();
    scheduler.stop();
    return result;
}

} // namespace latmesh::sim
