#pragma once

#include <cstdint>
#include <ctime>

namespace latmesh {

// Monotonic microseconds. Only differences are meaningful.
inline std::int64_t mono_now_us() {
    timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return static_cast<std::int64_t>(ts.tv_sec) * 1000000 + ts.tv_nsec / 1000;
}

// Wall-clock microseconds since the Unix epoch.
inline std::int64_t wall_now_us() {
    timespec ts;
    clock_gettime(CLOCK_REALTIME, &ts);
    return static_cast<std::int64_t>(ts.tv_sec) * 1000000 + ts.tv_nsec / 1000;
}

} // namespace latmesh
