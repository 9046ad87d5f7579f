#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latmesh/analysis.hpp"
#include "latmesh/controller.hpp"
#include "latmesh/probe_node.hpp"
#include "latmesh/sim.hpp"
#include "latmesh/topology.hpp"

namespace fs = std::filesystem;
using namespace latmesh;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ClusterConfig load_config(const std::string& path) {
    return parse_config(slurp(path));
}

std::vector<std::string> obs_files_in(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("node_", 0) == 0 && name.size() > 8 &&
            name.compare(name.size() - 8, 8, "_obs.csv") == 0)
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no node_*_obs.csv files in " + dir);
    return files;
}

analysis::Dataset load_dir(const std::string& dir, const ClusterConfig& topo) {
    return analysis::load_observations(obs_files_in(dir), topo);
}

std::optional<PairClass> class_by_name(const std::string& name) {
    for (PairClass c : {PairClass::SelfLoop, PairClass::SameSubnet, PairClass::CrossSubnet,
                        PairClass::CrossAZ, PairClass::CrossRegion})
        if (name == to_string(c)) return c;
    return std::nullopt;
}

std::vector<std::int64_t> samples_for(const analysis::Dataset& ds,
                                      const std::string& class_name) {
    if (class_name.empty()) {
        std::vector<std::int64_t> all;
        all.reserve(ds.observations.size());
        for (const auto& obs : ds.observations) all.push_back(obs.rtt_us);
        return all;
    }
    auto cls = class_by_name(class_name);
    if (!cls) throw std::runtime_error("unknown pair class '" + class_name + "'");
    auto groups = analysis::group_by_class(ds);
    auto it = groups.find(*cls);
    if (it == groups.end()) throw std::runtime_error("no observations in class " + class_name);
    return it->second;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << text).flush())
        throw std::runtime_error("cannot write " + out_path);
}

void print_results(const char* verb, const controller::ResultMap& results) {
    for (const auto& [id, res] : results)
        std::printf("%s node %u: %s%s%s\n", verb, id, res.ok ? "ok" : "FAILED",
                    res.detail.empty() ? "" : " ", res.detail.c_str());
}

Node* g_node = nullptr;
void handle_signal(int) {
    if (g_node) g_node->shutdown();
}

int cmd_node(const std::string& config_path, NodeId id, const std::string& data_dir) {
    ClusterConfig cfg = load_config(config_path);
    NodeOptions opts;
    if (!data_dir.empty()) opts.data_dir = data_dir;
    Node node(cfg, id, opts);
    node.start_serving();
    g_node = &node;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    std::fprintf(stderr, "node %u: data %s control %s\n", id,
                 node.data_endpoint().str().c_str(), node.control_endpoint().str().c_str());
    node.wait_shutdown();
    g_node = nullptr;
    return 0;
}

int cmd_sim(std::size_t n_nodes, const std::string& topology_path,
            const std::string& model_path, double duration_s, const std::string& out_dir) {
    ClusterConfig cfg;
    if (!topology_path.empty()) {
        cfg = load_config(topology_path);
        if (duration_s > 0) cfg.duration_s = duration_s;
    } else {
        cfg = sim::make_loopback_config(n_nodes, 100.0, 1024,
                                        duration_s > 0 ? duration_s : 10.0);
    }
    sim::LinkModel model = model_path.empty() ? sim::LinkModel::uniform(1000)
                                              : sim::LinkModel::parse(slurp(model_path));
    sim::VirtualClusterResult result = sim::run_virtual_cluster(cfg, model, out_dir);
    std::printf("simulated %zu nodes for %.1f s; %zu observations in %s\n",
                result.cfg.nodes.size(), result.cfg.duration_s,
                result.dataset.observations.size(), out_dir.c_str());
    emit(analysis::report_text(analysis::report(result.dataset)), "");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributed round-trip latency measurement toolkit"};
    app.require_subcommand(1);

    // node
    auto* node_cmd = app.add_subcommand("node", "run a probe node daemon");
    std::string node_config, node_data_dir;
    NodeId node_id = 0;
    node_cmd->add_option("--config", node_config, "cluster config json")->required();
    node_cmd->add_option("--id", node_id, "this node's id")->required();
    node_cmd->add_option("--data-dir", node_data_dir, "directory for csv output");

    // ctl
    auto* ctl_cmd = app.add_subcommand("ctl", "drive the whole cluster");
    ctl_cmd->require_subcommand(1);
    std::string ctl_config, fetch_dir, load_path;
    double stop_timeout = 300.0;
    auto* load_sub = ctl_cmd->add_subcommand("load", "push config to every node");
    load_sub->add_option("config", load_path, "cluster config json")->required();
    auto* start_sub = ctl_cmd->add_subcommand("start", "start the experiment");
    auto* stop_sub = ctl_cmd->add_subcommand("stop", "stop and drain");
    stop_sub->add_option("--timeout-s", stop_timeout, "per-node stop timeout");
    auto* status_sub = ctl_cmd->add_subcommand("status", "print per-node status");
    auto* fetch_sub = ctl_cmd->add_subcommand("fetch", "collect result csv files");
    fetch_sub->add_option("dir", fetch_dir, "output directory")->required();
    for (auto* sub : {start_sub, stop_sub, status_sub, fetch_sub})
        sub->add_option("--config", ctl_config, "cluster config json")->required();

    // analyze
    auto* an_cmd = app.add_subcommand("analyze", "statistics over fetched csv files");
    an_cmd->require_subcommand(1);
    std::string in_dir, in_dir_b, topo_path, class_name, out_path, quorum_spec, pair_spec;
    double window_s = 30.0;
    std::int64_t bin_us = 0;
    NodeId quorum_sender = 0;
    std::vector<std::string> merge_dirs;
    auto add_common = [&](CLI::App* sub, bool needs_input = true) {
        if (needs_input)
            sub->add_option("--input", in_dir, "directory with node_*_obs.csv")->required();
        sub->add_option("--topology", topo_path, "cluster config json")->required();
        sub->add_option("--out", out_path, "write csv here instead of stdout");
    };
    auto* report_sub = an_cmd->add_subcommand("report", "per-class percentile table");
    add_common(report_sub);
    bool report_as_text = false;
    report_sub->add_flag("--text", report_as_text, "aligned text instead of csv");
    auto* hist_sub = an_cmd->add_subcommand("hist", "latency histogram");
    add_common(hist_sub);
    hist_sub->add_option("--class", class_name, "restrict to one pair class");
    hist_sub->add_option("--bin-us", bin_us, "bin width (0 = auto)");
    auto* cdf_sub = an_cmd->add_subcommand("cdf", "empirical cdf");
    add_common(cdf_sub);
    cdf_sub->add_option("--class", class_name, "restrict to one pair class");
    auto* window_sub = an_cmd->add_subcommand("window", "windowed mean time series");
    add_common(window_sub);
    window_sub->add_option("--window-s", window_s, "tumbling window length");
    window_sub->add_option("--class", class_name, "restrict to one pair class");
    window_sub->add_option("--pair", pair_spec, "restrict to one pair: idA,idB");
    auto* quorum_sub = an_cmd->add_subcommand("quorum", "per-round k-of-n quorum latency");
    add_common(quorum_sub);
    quorum_sub->add_option("--quorum", quorum_spec, "k/n, e.g. 2/3")->required();
    quorum_sub->add_option("--sender", quorum_sender, "sender node id (default: first)");
    auto* ttest_sub = an_cmd->add_subcommand("ttest", "two-sample t-test between runs");
    add_common(ttest_sub);
    ttest_sub->add_option("--input-b", in_dir_b, "second run directory")->required();
    ttest_sub->add_option("--class", class_name, "restrict to one pair class");
    auto* merge_sub = an_cmd->add_subcommand("merge", "equal-weight merge of runs");
    add_common(merge_sub, false);
    merge_sub->add_option("--input", merge_dirs, "run directory (repeatable)")
        ->required()
        ->expected(-1);

    // sim
    auto* sim_cmd = app.add_subcommand("sim", "virtual cluster with injected delays");
    std::size_t sim_nodes = 3;
    std::string sim_topology, sim_model, sim_out;
    double sim_duration = 0.0;
    sim_cmd->add_option("--nodes", sim_nodes, "node count (ignored with --topology)");
    sim_cmd->add_option("--topology", sim_topology, "cluster config json");
    sim_cmd->add_option("--model", sim_model, "link delay model json");
    sim_cmd->add_option("--duration", sim_duration, "seconds to run");
    sim_cmd->add_option("--out", sim_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*node_cmd) return cmd_node(node_config, node_id, node_data_dir);

        if (*ctl_cmd) {
            if (*load_sub) {
                auto results = controller::push_config(load_config(load_path));
                print_results("load", results);
                return controller::all_ok(results) ? 0 : 1;
            }
            ClusterConfig cfg = load_config(ctl_config);
            if (*start_sub) {
                auto results = controller::start_all(cfg);
                print_results("start", results);
                return controller::all_ok(results) ? 0 : 1;
            }
            if (*stop_sub) {
                auto results = controller::stop_all(cfg, stop_timeout);
                print_results("stop", results);
                return controller::all_ok(results) ? 0 : 1;
            }
            if (*status_sub) {
                auto statuses = controller::status_all(cfg);
                bool ok = statuses.size() == cfg.nodes.size();
                for (const auto& [id, st] : statuses)
                    std::printf("node %u: %s\n", id, st.to_json().c_str());
                for (const auto& spec : cfg.nodes)
                    if (!statuses.count(spec.id)) {
                        std::printf("node %u: unreachable\n", spec.id);
                        ok = false;
                    }
                return ok ? 0 : 1;
            }
            if (*fetch_sub) {
                controller::Manifest manifest = controller::fetch_all(cfg, fetch_dir);
                for (const auto& entry : manifest.entries)
                    std::printf("node %u: %llu observations, %llu losses\n", entry.node,
                                (unsigned long long)entry.obs_rows,
                                (unsigned long long)entry.loss_rows);
                return 0;
            }
        }

        if (*an_cmd) {
            ClusterConfig topo = load_config(topo_path);
            if (*merge_sub) {
                std::vector<analysis::Dataset> runs;
                for (const auto& dir : merge_dirs) runs.push_back(load_dir(dir, topo));
                auto merged = analysis::merge_runs(runs);
                emit(analysis::report_csv(analysis::report(merged)), out_path);
                return 0;
            }
            analysis::Dataset ds = load_dir(in_dir, topo);
            if (*report_sub) {
                auto rows = analysis::report(ds);
                emit(report_as_text ? analysis::report_text(rows)
                                    : analysis::report_csv(rows),
                     out_path);
            } else if (*hist_sub) {
                auto hist = analysis::histogram(samples_for(ds, class_name), bin_us);
                std::ostringstream ss;
                ss << "bin_lower_us,count\n";
                for (const auto& [edge, count] : hist.bins)
                    ss << edge << "," << count << "\n";
                emit(ss.str(), out_path);
            } else if (*cdf_sub) {
                std::ostringstream ss;
                ss << "rtt_us,fraction\n";
                char buf[64];
                for (const auto& pt : analysis::cdf(samples_for(ds, class_name))) {
                    std::snprintf(buf, sizeof buf, "%lld,%.9f\n",
                                  (long long)pt.rtt_us, pt.fraction);
                    ss << buf;
                }
                emit(ss.str(), out_path);
            } else if (*window_sub) {
                analysis::ObservationFilter filter;
                if (!pair_spec.empty()) {
                    unsigned a = 0, b = 0;
                    if (std::sscanf(pair_spec.c_str(), "%u,%u", &a, &b) != 2)
                        throw std::runtime_error("--pair wants idA,idB");
                    filter = [a, b](const Observation& o) {
                        return o.sender == a && o.receiver == b;
                    };
                } else if (!class_name.empty()) {
                    auto cls = class_by_name(class_name);
                    if (!cls) throw std::runtime_error("unknown pair class");
                    filter = [&topo, cls](const Observation& o) {
                        return classify_pair(topo.at(o.sender).label,
                                             topo.at(o.receiver).label,
                                             o.sender == o.receiver) == *cls;
                    };
                }
                auto series = analysis::window_series(ds, window_s, filter);
                std::ostringstream ss;
                ss << "window_start_wall_us,mean_rtt_us,count\n";
                char buf[96];
                for (const auto& pt : series.points) {
                    std::snprintf(buf, sizeof buf, "%lld,%.3f,%llu\n",
                                  (long long)pt.window_start_wall_us, pt.mean_rtt_us,
                                  (unsigned long long)pt.count);
                    ss << buf;
                }
                emit(ss.str(), out_path);
            } else if (*quorum_sub) {
                unsigned k = 0, n = 0;
                if (std::sscanf(quorum_spec.c_str(), "%u/%u", &k, &n) != 2 || k == 0 ||
                    k > n)
                    throw std::runtime_error("--quorum wants k/n with 1 <= k <= n");
                std::set<NodeId> node_set;
                for (const auto& spec : topo.nodes) {
                    if (node_set.size() == n) break;
                    node_set.insert(spec.id);
                }
                if (node_set.size() < n)
                    throw std::runtime_error("topology has fewer than n nodes");
                NodeId sender = quorum_sender ? quorum_sender : topo.nodes.front().id;
                auto series = analysis::quorum_series(ds, sender, node_set, k);
                if (series.samples.empty()) throw std::runtime_error("no complete rounds");
                auto summary = analysis::summarize(series.samples);
                std::ostringstream ss;
                ss << "count,median,p5,p25,mean,p90,p95,p99,p999,p9999,p99999,max,"
                      "insufficient_rounds\n";
                char buf[256];
                std::snprintf(buf, sizeof buf,
                              "%llu,%lld,%lld,%lld,%.3f,%lld,%lld,%lld,%lld,%lld,%lld,"
                              "%lld,%llu\n",
                              (unsigned long long)summary.count, (long long)summary.median,
                              (long long)summary.p5, (long long)summary.p25, summary.mean,
                              (long long)summary.p90, (long long)summary.p95,
                              (long long)summary.p99, (long long)summary.p999,
                              (long long)summary.p9999, (long long)summary.p99999,
                              (long long)summary.max,
                              (unsigned long long)series.insufficient_rounds);
                ss << buf;
                emit(ss.str(), out_path);
            } else if (*ttest_sub) {
                analysis::Dataset ds_b = load_dir(in_dir_b, topo);
                auto result = analysis::two_sample_t(samples_for(ds, class_name),
                                                     samples_for(ds_b, class_name));
                std::ostringstream ss;
                char buf[128];
                std::snprintf(buf, sizeof buf, "t,df,p\n%.6f,%.0f,%.6g\n",
                              result.t_statistic, result.df, result.p_value);
                ss << buf;
                emit(ss.str(), out_path);
            }
            return 0;
        }

        if (*sim_cmd)
            return cmd_sim(sim_nodes, sim_topology, sim_model, sim_duration, sim_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
