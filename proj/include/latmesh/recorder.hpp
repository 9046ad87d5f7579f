#pragma once

#include <cstdint>
#include <cstdio>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace latmesh {

/// One round-trip sample. 32 bytes of fields; the enforced in-memory ceiling
/// is 52 bytes per entry including container overhead.
struct Observation {
    std::uint32_t sender = 0;
    std::uint32_t receiver = 0;
    std::uint64_t round = 0;
    std::int64_t send_wall_ts_us = 0;
    std::int64_t rtt_us = 0;

    bool operator==(const Observation&) const = default;
};
static_assert(sizeof(Observation) == 32);

struct LossRecord {
    std::uint32_t receiver = 0;
    std::uint64_t round = 0;
    std::int64_t expired_at_wall_us = 0;

    bool operator==(const LossRecord&) const = default;
};

inline constexpr std::size_t kObservationMemoryCeiling = 52;

inline constexpr const char* kObservationCsvHeader =
    "sender,receiver,round,send_wall_ts_us,rtt_us";
inline constexpr const char* kLossCsvHeader = "receiver,round,expired_at_wall_us";

void append_csv_row(std::string& out, const Observation& o);
void append_csv_row(std::string& out, const LossRecord& l);
const char* csv_header(const Observation*);
const char* csv_header(const LossRecord*);

struct SinkError : std::runtime_error {
    explicit SinkError(const std::string& what) : std::runtime_error(what) {}
};

/// Append-only storage for flushed CSV chunks.
class CsvSink {
  public:
    virtual ~CsvSink() = default;
    /// Appends a chunk of complete CSV rows; throws SinkError on failure.
    virtual void append(std::string_view chunk) = 0;
};

class FileSink : public CsvSink {
  public:
    /// Truncates and writes the header line immediately.
    FileSink(std::string path, std::string header);
    ~FileSink() override;
    void append(std::string_view chunk) override;
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::FILE* file_;
};

struct BufferClosed : std::runtime_error {
    BufferClosed() : std::runtime_error("recorder buffer closed") {}
};

/// Append-only in-memory buffer with a concurrent flusher. Records land in
/// fixed-capacity chunks (no reallocation of filled data), so record() is
/// O(1) and never performs storage I/O. flush() takes the buffered prefix
/// under the lock and serializes it outside the lock; rows survive a sink
/// failure in a staging area and are retried on the next flush.
template <class Row>
class Recorder {
  public:
    static constexpr std::size_t kChunkRows = 65536;

    bool record(const Row& row) {
        std::lock_guard lock(mu_);
        if (closed_) return false;
        if (chunks_.empty() || chunks_.back()->size() == kChunkRows) {
            auto chunk = std::make_unique<std::vector<Row>>();
            chunk->reserve(kChunkRows);
            chunks_.push_back(std::move(chunk));
        }
        chunks_.back()->push_back(row);
        ++recorded_;
        return true;
    }

    /// Returns rows flushed; 0 when the sink failed before any row landed.
    /// Rows that could not be appended stay staged for the next cycle.
    std::size_t flush(CsvSink& sink) {
        std::lock_guard flush_lock(flush_mu_);
        std::vector<std::unique_ptr<std::vector<Row>>> taken;
        {
            std::lock_guard lock(mu_);
            taken.swap(chunks_);
        }
        std::size_t done = 0;
        std::string text;
        auto append_rows = [&](const std::vector<Row>& rows) {
            text.clear();
            text.reserve(rows.size() * 48);
            for (const Row& row : rows) append_csv_row(text, row);
            sink.append(text);
        };
        if (!staging_.empty()) {
            try {
                append_rows(staging_);
            } catch (const SinkError&) {
                for (const auto& chunk : taken)
                    staging_.insert(staging_.end(), chunk->begin(), chunk->end());
                return 0;
            }
            done += staging_.size();
            staging_.clear();
            staging_.shrink_to_fit();
        }
        for (std::size_t i = 0; i < taken.size(); ++i) {
            try {
                append_rows(*taken[i]);
                done += taken[i]->size();
            } catch (const SinkError&) {
                for (std::size_t j = i; j < taken.size(); ++j)
                    staging_.insert(staging_.end(), taken[j]->begin(), taken[j]->end());
                break;
            }
        }
        std::lock_guard lock(mu_);
        flushed_ += done;
        return done;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
    }

    std::uint64_t recorded_count() const {
        std::lock_guard lock(mu_);
        return recorded_;
    }

    std::uint64_t flushed_count() const {
        std::lock_guard lock(mu_);
        return flushed_;
    }

    std::uint64_t buffered_count() const {
        std::lock_guard lock(mu_);
        return recorded_ - flushed_;
    }

    /// Bytes held by row storage (chunk capacity plus staging capacity).
    std::size_t buffer_bytes() const {
        std::lock_guard flush_lock(flush_mu_);
        std::lock_guard lock(mu_);
        return (chunks_.size() * kChunkRows + staging_.capacity()) * sizeof(Row);
    }

    /// Snapshot of everything recorded so far (flushed rows excluded).
    std::vector<Row> buffered_snapshot() const {
        std::lock_guard flush_lock(flush_mu_);
        std::lock_guard lock(mu_);
        std::vector<Row> out = staging_;
        for (const auto& chunk : chunks_) out.insert(out.end(), chunk->begin(), chunk->end());
        return out;
    }

  private:
    mutable std::mutex mu_;
    mutable std::mutex flush_mu_; // serializes flushers; never held while recording
    std::vector<std::unique_ptr<std::vector<Row>>> chunks_;
    std::vector<Row> staging_; // rows taken from chunks_ but not yet on storage
    std::uint64_t recorded_ = 0;
    std::uint64_t flushed_ = 0;
    bool closed_ = false;
};

using ObservationRecorder = Recorder<Observation>;
using LossRecorder = Recorder<LossRecord>;

} // namespace latmesh
