#pragma once

// All-pairs All-to-All traffic: one workgroup per (source, destination)
// streams its chunk into the destination buffer with remote stores.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rtsim/engine.hpp"

namespace rtsim {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct CollectivePlan {
    std::uint32_t num_gpus = 0;
    std::uint64_t collective_size = 0;
    std::uint64_t chunk_size = 0;
    std::uint64_t request_size = 256;
    std::uint32_t max_outstanding_per_wg = 64;

    std::uint64_t requests_per_stream() const { return chunk_size / request_size; }
    std::uint64_t network_streams() const {
        return static_cast<std::uint64_t>(num_gpus) * (num_gpus - 1);
    }
    std::uint64_t network_requests() const { return network_streams() * requests_per_stream(); }
    // Destination byte range written by `src`.
    std::uint64_t chunk_begin(std::uint32_t src) const { return src * chunk_size; }
    std::uint64_t chunk_end(std::uint32_t src) const { return (src + 1) * chunk_size; }
};

inline CollectivePlan build_plan(std::uint32_t num_gpus, std::uint64_t collective_size,
                                 std::uint64_t request_size, std::uint32_t max_outstanding = 64) {
    if (num_gpus < 1) throw ConfigError("collective.num_gpus: must be at least 1");
    if (collective_size == 0) throw ConfigError("collective.collective_size: must be positive");
    if (request_size == 0) throw ConfigError("collective.request_size: must be positive");
    if (max_outstanding == 0) throw ConfigError("collective.max_outstanding_per_wg: must be positive");
    if (collective_size % num_gpus != 0)
        throw ConfigError("collective.collective_size: " + std::to_string(collective_size) +
                          " is not divisible by num_gpus " + std::to_string(num_gpus));
    const std::uint64_t chunk = collective_size / num_gpus;
    if (chunk % request_size != 0)
        throw ConfigError("collective.request_size: " + std::to_string(request_size) +
                          " does not divide chunk size " + std::to_string(chunk));
    return CollectivePlan{num_gpus, collective_size, chunk, request_size, max_outstanding};
}

struct RequestStream {
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint64_t next_offset = 0;
    std::uint64_t end_offset = 0;
    std::uint32_t outstanding = 0;

    bool exhausted() const { return next_offset >= end_offset; }
    bool drained() const { return exhausted() && outstanding == 0; }
};

// Emits the next store offset, or nothing when the stream is exhausted or
// its window is full.
inline std::optional<std::uint64_t> inject(RequestStream& stream, const CollectivePlan& plan) {
    if (stream.exhausted() || stream.outstanding >= plan.max_outstanding_per_wg) return std::nullopt;
    const std::uint64_t offset = stream.next_offset;
    stream.next_offset += plan.request_size;
    ++stream.outstanding;
    return offset;
}

inline void acknowledge(RequestStream& stream) {
    if (stream.outstanding == 0) throw SimulationError("ack without an outstanding request");
    --stream.outstanding;
}

// Network streams only; self chunks are local copies and never enter the
// fabric.
inline std::vector<RequestStream> make_streams(const CollectivePlan& plan) {
    std::vector<RequestStream> streams;
    streams.reserve(plan.network_streams());
    for (std::uint32_t s = 0; s < plan.num_gpus; ++s)
        for (std::uint32_t d = 0; d < plan.num_gpus; ++d) {
            if (s == d) continue;
            streams.push_back(RequestStream{s, d, plan.chunk_begin(s), plan.chunk_end(s), 0});
        }
    return streams;
}

// Tracks completion of the whole collective.
class CollectiveProgress {
public:
    explicit CollectiveProgress(std::uint64_t expected) : expected_(expected) {}

    void on_ack(SimTime t) {
        ++acked_;
        if (t > last_ack_) last_ack_ = t;
    }
    bool done() const { return acked_ == expected_; }
    std::uint64_t acked() const { return acked_; }
    SimTime completion() const { return last_ack_; }

private:
    std::uint64_t expected_;
    std::uint64_t acked_ = 0;
    SimTime last_ack_ = 0;
};

}  // namespace rtsim
