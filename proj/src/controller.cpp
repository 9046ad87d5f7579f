#include "latmesh/controller.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>

#include <json.hpp>

#include "latmesh/net.hpp"

namespace latmesh::controller {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Opens a control connection, sends one line, reads the one-line reply.
std::string request(const Endpoint& ep, const std::string& line, double timeout_s = 30.0) {
    net::ConnPtr conn = net::connect_to(ep, 5.0);
    conn->set_read_timeout(timeout_s);
    if (!conn->write_all(line + "\n")) throw net::NetError("write failed to " + ep.str());
    auto reply = conn->read_line();
    if (!reply) throw net::NetError("no reply from " + ep.str());
    return *reply;
}

template <class Fn>
ResultMap per_node(const ClusterConfig& cfg, Fn&& fn) {
    std::vector<std::pair<NodeId, std::future<NodeResult>>> futures;
    for (const auto& n : cfg.nodes)
        futures.emplace_back(n.id, std::async(std::launch::async, fn, std::cref(n)));
    ResultMap out;
    for (auto& [id, fut] : futures) out[id] = fut.get();
    return out;
}

std::uint64_t count_rows(const std::string& csv) {
    // header line excluded
    std::uint64_t lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    return lines > 0 ? lines - 1 : 0;
}

std::string fetch_one(const Endpoint& ep, bool loss) {
    net::ConnPtr conn = net::connect_to(ep, 5.0);
    conn->set_read_timeout(120.0);
    std::string cmd = loss ? "FETCH LOSS\n" : "FETCH\n";
    if (!conn->write_all(cmd)) throw net::NetError("write failed to " + ep.str());
    auto head = conn->read_line();
    if (!head) throw net::NetError("no FETCH reply from " + ep.str());
    if (head->rfind("ERR", 0) == 0) throw net::NetError(*head);
    std::size_t nbytes = std::stoull(*head);
    std::string payload(nbytes, '\0');
    if (nbytes > 0 &&
        !conn->read_exact(reinterpret_cast<std::uint8_t*>(payload.data()), nbytes))
        throw net::NetError("short read from " + ep.str());
    return payload;
}

} // namespace

std::string Manifest::to_json() const {
    json arr = json::array();
    for (const auto& e : entries) {
        arr.push_back({{"node", e.node},
                       {"obs_file", e.obs_file},
                       {"loss_file", e.loss_file},
                       {"obs_rows", e.obs_rows},
                       {"loss_rows", e.loss_rows},
                       {"obs_bytes", e.obs_bytes},
                       {"loss_bytes", e.loss_bytes}});
    }
    return json{{"files", arr}}.dump(2);
}

ResultMap push_config(const ClusterConfig& cfg) {
    std::string text = dump_config(cfg);
    char want[24];
    std::snprintf(want, sizeof(want), "%016llx",
                  static_cast<unsigned long long>(config_digest(cfg)));
    return per_node(cfg, [text, want = std::string(want)](const NodeSpec& n) {
        NodeResult r;
        try {
            std::string reply = request(n.control_address, "LOAD " + text);
            if (reply == "OK " + want) {
                r.ok = true;
                r.detail = want;
            } else if (reply.rfind("OK ", 0) == 0) {
                r.detail = "DigestMismatch: node reported " + reply.substr(3);
            } else {
                r.detail = reply;
            }
        } catch (const std::exception& e) {
            r.detail = std::string("NodeUnreachable: ") + e.what();
        }
        return r;
    });
}

ResultMap start_all(const ClusterConfig& cfg) {
    // Pre-flight: every node reachable and loaded before any START goes out.
    ResultMap pre = per_node(cfg, [](const NodeSpec& n) {
        NodeResult r;
        try {
            NodeStatus s = NodeStatus::from_json(request(n.control_address, "STATUS"));
            if (s.state == "loaded") {
                r.ok = true;
            } else {
                r.detail = "IllegalState: node is " + s.state;
            }
        } catch (const std::exception& e) {
            r.detail = std::string("NodeUnreachable: ") + e.what();
        }
        return r;
    });
    if (!all_ok(pre)) return pre;
    return per_node(cfg, [](const NodeSpec& n) {
        NodeResult r;
        try {
            std::string reply = request(n.control_address, "START");
            r.ok = (reply == "OK");
            r.detail = reply;
        } catch (const std::exception& e) {
            r.detail = std::string("NodeUnreachable: ") + e.what();
        }
        return r;
    });
}

ResultMap stop_all(const ClusterConfig& cfg, double timeout_s) {
    return per_node(cfg, [timeout_s](const NodeSpec& n) {
        NodeResult r;
        try {
            std::string reply = request(n.control_address, "STOP", timeout_s);
            r.ok = (reply == "OK");
            r.detail = reply;
        } catch (const std::exception& e) {
            r.detail = std::string("NodeUnreachable: ") + e.what();
        }
        return r;
    });
}

StatusMap status_all(const ClusterConfig& cfg) {
    StatusMap out;
    std::vector<std::pair<NodeId, std::future<NodeStatus>>> futures;
    for (const auto& n : cfg.nodes)
        futures.emplace_back(n.id, std::async(std::launch::async, [&n] {
                                 return NodeStatus::from_json(
                                     request(n.control_address, "STATUS"));
                             }));
    for (auto& [id, fut] : futures) out[id] = fut.get();
    return out;
}

Manifest fetch_all(const ClusterConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Manifest manifest;
    for (const auto& n : cfg.nodes) {
        NodeStatus status = NodeStatus::from_json(request(n.control_address, "STATUS"));
        FetchEntry entry;
        entry.node = n.id;
        for (bool loss : {false, true}) {
            std::string payload;
            try {
                payload = fetch_one(n.control_address, loss);
            } catch (const net::NetError&) {
                payload = fetch_one(n.control_address, loss); // one retry
            }
            std::string path = out_dir + "/node_" + std::to_string(n.id) +
                               (loss ? "_loss.csv" : "_obs.csv");
            std::ofstream out(path, std::ios::binary | std::ios::trunc);
            out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
            if (!out) throw net::NetError("cannot write " + path);
            if (loss) {
                entry.loss_file = path;
                entry.loss_rows = count_rows(payload);
                entry.loss_bytes = payload.size();
            } else {
                entry.obs_file = path;
                entry.obs_rows = count_rows(payload);
                entry.obs_bytes = payload.size();
            }
        }
        if (entry.obs_rows != status.observations)
            throw net::NetError("row count mismatch for node " + std::to_string(n.id) +
                                ": fetched " + std::to_string(entry.obs_rows) +
                                ", STATUS reports " + std::to_string(status.observations));
        manifest.entries.push_back(std::move(entry));
    }
    std::ofstream mf(out_dir + "/manifest.json", std::ios::trunc);
    mf << manifest.to_json() << "\n";
    return manifest;
}

bool all_ok(const ResultMap& results) {
    for (const auto& [id, r] : results)
        if (!r.ok) return false;
    return true;
}

} // namespace latmesh::controller
