#include "latmesh/analysis.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "latmesh/stats.hpp"

namespace latmesh::analysis {

namespace {

constexpr PairClass kReportOrder[] = {PairClass::SameSubnet, PairClass::CrossSubnet,
                                      PairClass::CrossAZ, PairClass::CrossRegion,
                                      PairClass::SelfLoop};

bool obs_order(const Observation& a, const Observation& b) {
    if (a.send_wall_ts_us != b.send_wall_ts_us) return a.send_wall_ts_us < b.send_wall_ts_us;
    if (a.sender != b.sender) return a.sender < b.sender;
    return a.round < b.round;
}

std::int64_t percentile_sorted(const std::vector<std::int64_t>& sorted, double p) {
    std::size_t n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

} // namespace

Dataset load_observations(const std::vector<std::string>& files,
                          const ClusterConfig& topology) {
    Dataset ds;
    ds.topology = topology;
    for (const auto& path : files) {
        std::ifstream in(path);
        if (!in) throw AnalysisError("cannot open " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            if (lineno == 1) {
                if (line != kObservationCsvHeader)
                    throw AnalysisError(path + ":1: unexpected header '" + line + "'");
                continue;
            }
            Observation o;
            unsigned long long sender, receiver, round;
            long long wall, rtt;
            if (std::sscanf(line.c_str(), "%llu,%llu,%llu,%lld,%lld", &sender, &receiver,
                            &round, &wall, &rtt) != 5)
                throw AnalysisError(path + ":" + std::to_string(lineno) + ": bad row");
            o.sender = static_cast<std::uint32_t>(sender);
            o.receiver = static_cast<std::uint32_t>(receiver);
            o.round = round;
            o.send_wall_ts_us = wall;
            o.rtt_us = rtt;
            if (!topology.find(o.sender))
                throw AnalysisError(path + ":" + std::to_string(lineno) + ": unknown node " +
                                    std::to_string(o.sender));
            if (!topology.find(o.receiver))
                throw AnalysisError(path + ":" + std::to_string(lineno) + ": unknown node " +
                                    std::to_string(o.receiver));
            ds.observations.push_back(o);
        }
    }
    std::sort(ds.observations.begin(), ds.observations.end(), obs_order);
    return ds;
}

std::int64_t percentile(std::vector<std::int64_t> samples, double p) {
    if (samples.empty()) throw EmptySamples();
    if (p <= 0.0 || p > 100.0) throw AnalysisError("percentile p must be in (0, 100]");
    std::sort(samples.begin(), samples.end());
    return percentile_sorted(samples, p);
}

StatsSummary summarize(std::vector<std::int64_t> samples) {
    if (samples.empty()) throw EmptySamples();
    std::sort(samples.begin(), samples.end());
    StatsSummary s;
    s.count = samples.size();
    s.median = percentile_sorted(samples, 50.0);
    s.p5 = percentile_sorted(samples, 5.0);
    s.p25 = percentile_sorted(samples, 25.0);
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) /
             static_cast<double>(samples.size());
    s.p90 = percentile_sorted(samples, 90.0);
    s.p95 = percentile_sorted(samples, 95.0);
    s.p99 = percentile_sorted(samples, 99.0);
    s.p999 = percentile_sorted(samples, 99.9);
    s.p9999 = percentile_sorted(samples, 99.99);
    s.p99999 = percentile_sorted(samples, 99.999);
    s.max = samples.back();
    return s;
}

std::map<PairClass, std::vector<std::int64_t>> group_by_class(const Dataset& ds) {
    std::map<PairClass, std::vector<std::int64_t>> out;
    for (const auto& o : ds.observations) {
        PairClass cls = classify_pair(ds.topology.at(o.sender).label,
                                      ds.topology.at(o.receiver).label,
                                      o.sender == o.receiver);
        out[cls].push_back(o.rtt_us);
    }
    return out;
}

WindowSeries window_series(const Dataset& ds, double window_s,
                           const ObservationFilter& filter) {
    if (window_s <= 0) throw AnalysisError("window_s must be positive");
    auto window_us = static_cast<std::int64_t>(window_s * 1e6);
    std::map<std::int64_t, std::pair<double, std::uint64_t>> acc;
    for (const auto& o : ds.observations) {
        if (filter && !filter(o)) continue;
        std::int64_t start = o.send_wall_ts_us - (((o.send_wall_ts_us % window_us) + window_us) %
                                                  window_us);
        auto& [sum, count] = acc[start];
        sum += static_cast<double>(o.rtt_us);
        ++count;
    }
    WindowSeries series;
    series.window_s = window_s;
    for (const auto& [start, sc] : acc)
        series.points.push_back({start, sc.first / static_cast<double>(sc.second), sc.second});
    return series;
}

std::vector<RoundRecord> rounds(const Dataset& ds, NodeId sender,
                                const std::set<NodeId>& node_set) {
    for (NodeId id : node_set)
        if (!ds.topology.find(id))
            throw AnalysisError("node_set member " + std::to_string(id) + " not in topology");
    std::map<std::uint64_t, RoundRecord> by_round;
    for (const auto& o : ds.observations) {
        if (o.sender != sender || !node_set.count(o.receiver)) continue;
        RoundRecord& rr = by_round[o.round];
        rr.sender = sender;
        rr.round = o.round;
        rr.replies[o.receiver] = o.rtt_us;
    }
    std::vector<RoundRecord> out;
    out.reserve(by_round.size());
    for (auto& [round, rr] : by_round) out.push_back(std::move(rr));
    return out;
}

std::optional<std::int64_t> quorum_latency(const RoundRecord& rr, std::size_t k) {
    if (k < 1) throw AnalysisError("quorum k must be >= 1");
    if (rr.replies.size() < k) return std::nullopt;
    std::vector<std::int64_t> lat;
    lat.reserve(rr.replies.size());
    for (const auto& [id, rtt] : rr.replies) lat.push_back(rtt);
    std::nth_element(lat.begin(), lat.begin() + static_cast<long>(k - 1), lat.end());
    return lat[k - 1];
}

QuorumSeries quorum_series(const Dataset& ds, NodeId sender, const std::set<NodeId>& node_set,
                           std::size_t k) {
    QuorumSeries out;
    for (const RoundRecord& rr : rounds(ds, sender, node_set)) {
        if (auto q = quorum_latency(rr, k))
            out.samples.push_back(*q);
        else
            ++out.insufficient_rounds;
    }
    return out;
}

Histogram histogram(const std::vector<std::int64_t>& samples, std::int64_t bin_width_us) {
    if (samples.empty()) throw EmptySamples();
    if (bin_width_us < 0) throw AnalysisError("bin width must be >= 0");
    Histogram h;
    if (bin_width_us == 0) {
        std::vector<std::int64_t> sorted = samples;
        std::sort(sorted.begin(), sorted.end());
        double iqr = static_cast<double>(percentile_sorted(sorted, 75.0) -
                                         percentile_sorted(sorted, 25.0));
        double fd = 2.0 * iqr / std::cbrt(static_cast<double>(sorted.size()));
        bin_width_us = std::max<std::int64_t>(5, static_cast<std::int64_t>(std::llround(fd)));
    }
    h.bin_width_us = bin_width_us;
    for (std::int64_t v : samples) {
        std::int64_t edge = (v / bin_width_us) * bin_width_us;
        if (v < 0 && v % bin_width_us != 0) edge -= bin_width_us;
        ++h.bins[edge];
    }
    return h;
}

std::vector<CdfPoint> cdf(std::vector<std::int64_t> samples) {
    if (samples.empty()) throw EmptySamples();
    std::sort(samples.begin(), samples.end());
    std::vector<CdfPoint> out;
    double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        // keep the last occurrence of each value
        if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
        out.push_back({samples[i], static_cast<double>(i + 1) / n});
    }
    return out;
}

TResult two_sample_t(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
    if (a.size() < 2 || b.size() < 2) throw InsufficientSamples();
    double na = static_cast<double>(a.size());
    double nb = static_cast<double>(b.size());
    double ma = std::accumulate(a.begin(), a.end(), 0.0) / na;
    double mb = std::accumulate(b.begin(), b.end(), 0.0) / nb;
    double ssa = 0.0, ssb = 0.0;
    for (std::int64_t v : a) ssa += (v - ma) * (v - ma);
    for (std::int64_t v : b) ssb += (v - mb) * (v - mb);
    TResult r;
    r.df = na + nb - 2.0;
    double pooled = (ssa + ssb) / r.df;
    if (pooled == 0.0) {
        if (ma == mb) throw ZeroVariance();
        r.t_statistic = ma > mb ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
        r.p_value = 0.0;
        return r;
    }
    r.t_statistic = (ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    double abs_t = std::fabs(r.t_statistic);
    double tail = r.df > 1000.0 ? 1.0 - stats::normal_cdf(abs_t)
                                : 1.0 - stats::student_t_cdf(abs_t, r.df);
    r.p_value = std::min(1.0, 2.0 * tail);
    return r;
}

Dataset merge_runs(const std::vector<Dataset>& runs) {
    if (runs.empty()) throw AnalysisError("need at least one run");
    const ClusterConfig& topo = runs.front().topology;
    for (const Dataset& run : runs)
        if (dump_config(run.topology) != dump_config(topo)) throw TopologyMismatch();
    if (runs.size() == 1) return runs.front();

    auto classify = [&](const Observation& o) {
        return classify_pair(topo.at(o.sender).label, topo.at(o.receiver).label,
                             o.sender == o.receiver);
    };

    // Per class, the minimum per-run count decides how much each run keeps.
    std::map<PairClass, std::uint64_t> min_count;
    std::vector<std::map<PairClass, std::uint64_t>> run_counts(runs.size());
    for (std::size_t i = 0; i < runs.size(); ++i)
        for (const auto& o : runs[i].observations) ++run_counts[i][classify(o)];
    for (const auto& [cls, count] : run_counts[0]) {
        std::uint64_t m = count;
        for (std::size_t i = 1; i < runs.size(); ++i) {
            auto it = run_counts[i].find(cls);
            m = std::min(m, it == run_counts[i].end() ? 0 : it->second);
        }
        min_count[cls] = m;
    }

    Dataset out;
    out.topology = topo;
    for (const Dataset& run : runs) {
        std::map<PairClass, std::uint64_t> taken;
        for (const auto& o : run.observations) { // runs are sorted, so earliest-first
            PairClass cls = classify(o);
            auto it = min_count.find(cls);
            std::uint64_t limit = it == min_count.end() ? 0 : it->second;
            if (taken[cls] < limit) {
                out.observations.push_back(o);
                ++taken[cls];
            }
        }
    }
    std::sort(out.observations.begin(), out.observations.end(), obs_order);
    return out;
}

std::vector<ReportRow> report(const Dataset& ds) {
    if (ds.observations.empty()) throw EmptySamples();
    auto groups = group_by_class(ds);
    std::vector<ReportRow> rows;
    for (PairClass cls : kReportOrder) {
        auto it = groups.find(cls);
        if (it == groups.end()) continue; // absent class: row omitted
        rows.push_back({cls, summarize(it->second)});
    }
    return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    out << "class,count,median,p5,p25,mean,p90,p95,p99,p999,p9999,p99999,max\n";
    for (const auto& row : rows) {
        const StatsSummary& s = row.summary;
        char buf[320];
        std::snprintf(buf, sizeof(buf),
                      "%s,%" PRIu64 ",%" PRId64 ",%" PRId64 ",%" PRId64 ",%.3f,%" PRId64
                      ",%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRId64 ",%" PRId64
                      "\n",
                      to_string(row.cls), s.count, s.median, s.p5, s.p25, s.mean, s.p90, s.p95,
                      s.p99, s.p999, s.p9999, s.p99999, s.max);
        out << buf;
    }
    return out.str();
}

std::string report_text(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    char buf[360];
    std::snprintf(buf, sizeof(buf), "%-13s %10s %8s %8s %8s %10s %8s %8s %8s %8s %9s %10s %10s\n",
                  "class", "count", "median", "p5", "p25", "mean", "p90", "p95", "p99", "p999",
                  "p9999", "p99999", "max");
    out << buf;
    for (const auto& row : rows) {
        const StatsSummary& s = row.summary;
        std::snprintf(buf, sizeof(buf),
                      "%-13s %10" PRIu64 " %8" PRId64 " %8" PRId64 " %8" PRId64 " %10.1f %8" PRId64
                      " %8" PRId64 " %8" PRId64 " %8" PRId64 " %9" PRId64 " %10" PRId64
                      " %10" PRId64 "\n",
                      to_string(row.cls), s.count, s.median, s.p5, s.p25, s.mean, s.p90, s.p95,
                      s.p99, s.p999, s.p9999, s.p99999, s.max);
        out << buf;
    }
    return out.str();
}

} // namespace latmesh::analysis
