#pragma once

// Scale-up fabric: per-GPU stations split into ports, one single-level
// switch per rail, FIFO serializers at every port, and fixed stage latencies.

#include <cstdint>
#include <string>
#include <vector>

#include "rtsim/collective.hpp"
#include "rtsim/engine.hpp"

namespace rtsim {

enum class StationPolicy {
    dst_mod,      // port = dst mod ports_per_gpu
    src_dst_mod,  // port = (src + dst) mod ports_per_gpu
};

inline const char* to_string(StationPolicy p) {
    return p == StationPolicy::dst_mod ? "dst_mod" : "src_dst_mod";
}

struct FabricConfig {
    std::uint32_t stations_per_gpu = 16;
    std::uint32_t lanes_per_station = 4;
    std::uint32_t lanes_per_link = 4;   // 4 = one x4 link per station, 1 = four x1 links
    std::uint64_t lane_gbps = 200;
    std::uint64_t link_latency_ns = 300;
    std::uint64_t switch_latency_ns = 300;
    std::uint64_t local_fabric_latency_ns = 120;
    std::uint64_t hbm_latency_ns = 150;
    std::uint64_t header_bytes = 0;
    std::uint64_t ack_bytes = 64;
    bool unlimited_bandwidth = false;
    StationPolicy station_policy = StationPolicy::dst_mod;

    std::uint32_t links_per_station() const { return lanes_per_station / lanes_per_link; }
    // Ports per GPU == rails == switches.
    std::uint32_t ports_per_gpu() const { return stations_per_gpu * links_per_station(); }
    std::uint64_t port_gbps() const { return lanes_per_link * lane_gbps; }
    std::uint32_t station_of_port(std::uint32_t port) const { return port / links_per_station(); }
};

inline std::uint32_t select_port(const FabricConfig& cfg, std::uint32_t src, std::uint32_t dst) {
    const std::uint32_t ports = cfg.ports_per_gpu();
    switch (cfg.station_policy) {
    case StationPolicy::src_dst_mod: return (src + dst) % ports;
    case StationPolicy::dst_mod: break;
    }
    return dst % ports;
}

// Station (and therefore L1 Link TLB) a stream uses at both ends.
inline std::uint32_t select_station(const FabricConfig& cfg, std::uint32_t src, std::uint32_t dst) {
    return cfg.station_of_port(select_port(cfg, src, dst));
}

// Whole nanoseconds to put `payload` plus header on one port, rounded up.
inline SimTime serialization_delay(const FabricConfig& cfg, std::uint64_t payload) {
    if (cfg.unlimited_bandwidth) return 0;
    const std::uint64_t bits = (payload + cfg.header_bytes) * 8;
    const std::uint64_t gbps = cfg.port_gbps();
    return (bits + gbps - 1) / gbps;
}

// Port serializer state. Callers must present packets in nondecreasing
// arrival time; the event loop guarantees that.
class Fabric {
public:
    Fabric(const FabricConfig& cfg, std::uint32_t num_gpus)
        : cfg_(cfg),
          num_gpus_(num_gpus),
          tx_free_(static_cast<std::size_t>(num_gpus) * cfg.ports_per_gpu(), 0),
          switch_free_(static_cast<std::size_t>(num_gpus) * cfg.ports_per_gpu(), 0),
          tx_bytes_(tx_free_.size(), 0) {}

    const FabricConfig& config() const { return cfg_; }
    std::uint32_t num_gpus() const { return num_gpus_; }
    std::uint32_t rails() const { return cfg_.ports_per_gpu(); }

    // Time the packet's last bit leaves `gpu`'s port onto the rail.
    SimTime transmit(std::uint32_t gpu, std::uint32_t port, SimTime ready, std::uint64_t payload) {
        auto& free_at = tx_free_[index(gpu, port)];
        const SimTime start = ready > free_at ? ready : free_at;
        free_at = start + serialization_delay(cfg_, payload);
        tx_bytes_[index(gpu, port)] += payload + cfg_.header_bytes;
        return free_at;
    }

    // Switch output port toward `out_gpu` on `rail`. Cut-through: an idle
    // port forwards with no added delay, a busy one queues FIFO.
    SimTime forward(std::uint32_t rail, std::uint32_t out_gpu, SimTime ready, std::uint64_t payload) {
        auto& free_at = switch_free_[index(out_gpu, rail)];
        const SimTime start = ready > free_at ? ready : free_at;
        free_at = start + serialization_delay(cfg_, payload);
        return start;
    }

    // Source issue -> packet at the source port serializer.
    SimTime to_port(SimTime issue) const { return issue + cfg_.local_fabric_latency_ns; }
    // Port departure -> switch output queue.
    SimTime to_switch(SimTime departed) const {
        return departed + cfg_.link_latency_ns + cfg_.switch_latency_ns;
    }
    // Switch output departure -> far-end station.
    SimTime to_station(SimTime forwarded) const { return forwarded + cfg_.link_latency_ns; }
    // Ack at the source station -> workgroup.
    SimTime to_workgroup(SimTime at_station) const { return at_station + cfg_.local_fabric_latency_ns; }

    std::uint64_t bytes_sent(std::uint32_t gpu, std::uint32_t port) const { return tx_bytes_[index(gpu, port)]; }

private:
    std::size_t index(std::uint32_t gpu, std::uint32_t port) const {
        return static_cast<std::size_t>(gpu) * cfg_.ports_per_gpu() + port;
    }

    FabricConfig cfg_;
    std::uint32_t num_gpus_;
    std::vector<SimTime> tx_free_;
    std::vector<SimTime> switch_free_;
    std::vector<std::uint64_t> tx_bytes_;
};

// Unloaded forward latency, issue to Link MMU arrival.
inline SimTime idle_forward_latency(const FabricConfig& cfg, std::uint64_t payload) {
    return cfg.local_fabric_latency_ns + serialization_delay(cfg, payload) + 2 * cfg.link_latency_ns +
           cfg.switch_latency_ns;
}

// Unloaded return latency, HBM commit to ack at the workgroup.
inline SimTime idle_return_latency(const FabricConfig& cfg) {
    return serialization_delay(cfg, cfg.ack_bytes) + 2 * cfg.link_latency_ns + cfg.switch_latency_ns +
           cfg.local_fabric_latency_ns;
}

}  // namespace rtsim
