#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "latmesh/topology.hpp"

namespace latmesh {

struct PendingKey {
    NodeId receiver = 0;
    std::uint64_t round = 0;

    bool operator==(const PendingKey&) const = default;
};

struct PendingKeyHash {
    std::size_t operator()(const PendingKey& k) const {
        std::uint64_t h = (std::uint64_t(k.receiver) << 32) ^ k.round;
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        return static_cast<std::size_t>(h);
    }
};

struct PendingEntry {
    std::int64_t send_mono_us = 0;
    std::int64_t send_wall_us = 0;
};

/// Outstanding probes awaiting echoes. Concurrent insert (sender path) and
/// match (receive path); expiry may run from either side.
class PendingTable {
  public:
    /// false if the key is already pending (duplicate round; not inserted).
    bool insert(const PendingKey& key, const PendingEntry& entry) {
        std::lock_guard lock(mu_);
        return map_.emplace(key, entry).second;
    }

    /// Removes and returns the entry; nullopt when absent (late or duplicate echo).
    std::optional<PendingEntry> match(const PendingKey& key) {
        std::lock_guard lock(mu_);
        auto it = map_.find(key);
        if (it == map_.end()) return std::nullopt;
        PendingEntry e = it->second;
        map_.erase(it);
        return e;
    }

    /// Removes every entry sent at or before cutoff_mono_us and returns them.
    std::vector<std::pair<PendingKey, PendingEntry>> expire_older(std::int64_t cutoff_mono_us) {
        std::lock_guard lock(mu_);
        std::vector<std::pair<PendingKey, PendingEntry>> out;
        for (auto it = map_.begin(); it != map_.end();) {
            if (it->second.send_mono_us <= cutoff_mono_us) {
                out.emplace_back(it->first, it->second);
                it = map_.erase(it);
            } else {
                ++it;
            }
        }
        return out;
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return map_.size();
    }

  private:
    mutable std::mutex mu_;
    std::unordered_map<PendingKey, PendingEntry, PendingKeyHash> map_;
};

} // namespace latmesh
