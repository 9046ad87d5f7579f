#include "latmesh/recorder.hpp"

#include <cinttypes>

namespace latmesh {

void append_csv_row(std::string& out, const Observation& o) {
    char buf[128];
    int n = std::snprintf(buf, sizeof(buf), "%u,%u,%" PRIu64 ",%" PRId64 ",%" PRId64 "\n",
                          o.sender, o.receiver, o.round, o.send_wall_ts_us, o.rtt_us);
    out.append(buf, static_cast<std::size_t>(n));
}

void append_csv_row(std::string& out, const LossRecord& l) {
    char buf[96];
    int n = std::snprintf(buf, sizeof(buf), "%u,%" PRIu64 ",%" PRId64 "\n", l.receiver,
                          l.round, l.expired_at_wall_us);
    out.append(buf, static_cast<std::size_t>(n));
}

const char* csv_header(const Observation*) { return kObservationCsvHeader; }
const char* csv_header(const LossRecord*) { return kLossCsvHeader; }

FileSink::FileSink(std::string path, std::string header) : path_(std::move(path)) {
    file_ = std::fopen(path_.c_str(), "wb");
    if (!file_) throw SinkError("cannot open sink file " + path_);
    header.push_back('\n');
    if (std::fwrite(header.data(), 1, header.size(), file_) != header.size())
        throw SinkError("cannot write header to " + path_);
    std::fflush(file_);
}

FileSink::~FileSink() {
    if (file_) std::fclose(file_);
}

void FileSink::append(std::string_view chunk) {
    if (std::fwrite(chunk.data(), 1, chunk.size(), file_) != chunk.size())
        throw SinkError("short write to " + path_);
    if (std::fflush(file_) != 0) throw SinkError("flush failed on " + path_);
}

} // namespace latmesh
