#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "latmesh/recorder.hpp"
#include "latmesh/topology.hpp"

namespace latmesh::analysis {

struct AnalysisError : std::runtime_error {
    explicit AnalysisError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptySamples : AnalysisError {
    EmptySamples() : AnalysisError("empty sample set") {}
};

struct Dataset {
    std::vector<Observation> observations; // sorted by (send_wall_ts_us, sender, round)
    ClusterConfig topology;
};

/// Merged node CSV files, globally sorted. Unknown sender/receiver ids are
/// rejected against the topology.
Dataset load_observations(const std::vector<std::string>& files, const ClusterConfig& topology);

/// Nearest-rank percentile: sorted value at 1-based index ceil(p/100 * N).
/// p in (0, 100]; percentile(100) is the max.
std::int64_t percentile(std::vector<std::int64_t> samples, double p);

/// The appendix-table row. All latencies in microseconds.
struct StatsSummary {
    std::uint64_t count = 0;
    std::int64_t median = 0;
    std::int64_t p5 = 0;
    std::int64_t p25 = 0;
    double mean = 0.0;
    std::int64_t p90 = 0;
    std::int64_t p95 = 0;
    std::int64_t p99 = 0;
    std::int64_t p999 = 0;
    std::int64_t p9999 = 0;
    std::int64_t p99999 = 0;
    std::int64_t max = 0;
};

StatsSummary summarize(std::vector<std::int64_t> samples);

std::map<PairClass, std::vector<std::int64_t>> group_by_class(const Dataset& ds);

struct WindowPoint {
    std::int64_t window_start_wall_us = 0;
    double mean_rtt_us = 0.0;
    std::uint64_t count = 0;
};

struct WindowSeries {
    double window_s = 0.0;
    std::vector<WindowPoint> points;
};

using ObservationFilter = std::function<bool(const Observation&)>;

/// Tumbling windows aligned to multiples of window_s on the wall clock;
/// empty windows omitted.
WindowSeries window_series(const Dataset& ds, double window_s,
                           const ObservationFilter& filter = nullptr);

struct RoundRecord {
    NodeId sender = 0;
    std::uint64_t round = 0;
    std::map<NodeId, std::int64_t> replies; // only received echoes
};

std::vector<RoundRecord> rounds(const Dataset& ds, NodeId sender,
                                const std::set<NodeId>& node_set);

/// k-th smallest reply latency; nullopt when fewer than k replies arrived.
std::optional<std::int64_t> quorum_latency(const RoundRecord& rr, std::size_t k);

struct QuorumSeries {
    std::vector<std::int64_t> samples; // one per round with >= k replies
    std::uint64_t insufficient_rounds = 0;
};

QuorumSeries quorum_series(const Dataset& ds, NodeId sender, const std::set<NodeId>& node_set,
                           std::size_t k);

struct Histogram {
    std::int64_t bin_width_us = 0;
    std::map<std::int64_t, std::uint64_t> bins; // lower edge -> count
};

/// bin_width_us == 0 selects Freedman-Diaconis, floored at 5 us.
Histogram histogram(const std::vector<std::int64_t>& samples, std::int64_t bin_width_us);

struct CdfPoint {
    std::int64_t rtt_us = 0;
    double fraction = 0.0;
};

std::vector<CdfPoint> cdf(std::vector<std::int64_t> samples);

struct TResult {
    double t_statistic = 0.0;
    double p_value = 0.0;
    double df = 0.0;
};

struct InsufficientSamples : AnalysisError {
    InsufficientSamples() : AnalysisError("need at least 2 samples per side") {}
};

/// Both samples constant and equal; t is undefined.
struct ZeroVariance : AnalysisError {
    ZeroVariance() : AnalysisError("zero pooled variance with equal means") {}
};

/// Student's pooled-variance two-sample t with df = |a|+|b|-2. Two-sided p
/// from the exact t CDF; normal approximation above df 1000.
TResult two_sample_t(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b);

struct TopologyMismatch : AnalysisError {
    TopologyMismatch() : AnalysisError("runs have different topologies") {}
};

/// Equal-weight aggregation: per pair class, every run contributes its
/// earliest min-across-runs observations of that class.
Dataset merge_runs(const std::vector<Dataset>& runs);

struct ReportRow {
    PairClass cls;
    StatsSummary summary;
};

/// One row per pair class present in the dataset, in the fixed order
/// Same Subnet, Cross Subnet, Cross AZ, Cross Region, Self Loop.
std::vector<ReportRow> report(const Dataset& ds);

std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_text(const std::vector<ReportRow>& rows);

} // namespace latmesh::analysis
