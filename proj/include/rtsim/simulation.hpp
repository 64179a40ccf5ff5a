#pragma once

// One simulation run: All-to-All traffic over the fabric into each
// destination's Link MMU, with stage timestamps recorded per request.

#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "rtsim/address.hpp"
#include "rtsim/collective.hpp"
#include "rtsim/config.hpp"
#include "rtsim/engine.hpp"
#include "rtsim/fabric.hpp"
#include "rtsim/metrics.hpp"
#include "rtsim/translation.hpp"

namespace rtsim {

struct RunResult {
    RunSummary summary;
    std::vector<TraceRow> trace;
};

inline json topology_json(const SimConfig& c) {
    const auto& f = c.fabric;
    return json{
        {"num_gpus", c.num_gpus},
        {"stations_per_gpu", f.stations_per_gpu},
        {"links_per_station", f.links_per_station()},
        {"rails", f.ports_per_gpu()},
        {"switches", f.ports_per_gpu()},
        {"switch_ports", c.num_gpus},
        {"port_gbps", f.port_gbps()},
        {"port_bytes_per_ns", static_cast<double>(f.port_gbps()) / 8.0},
        {"station_policy", to_string(f.station_policy)},
        {"idle_forward_ns", idle_forward_latency(f, c.request_size)},
        {"idle_return_ns", idle_return_latency(f)},
    };
}

class Simulation {
public:
    explicit Simulation(SimConfig cfg)
        : cfg_((validate(cfg), std::move(cfg))),
          plan_(plan_for(cfg_)),
          layout_(cfg_.buffer_base, cfg_.collective_size, cfg_.page_size),
          frames_(cfg_.num_gpus, layout_.first_page(), layout_.page_count(), cfg_.spa_mapping, cfg_.seed),
          fabric_(cfg_.fabric, cfg_.num_gpus),
          metrics_(cfg_.num_gpus, cfg_.fabric.hbm_latency_ns, cfg_.trace_enabled, cfg_.trace_sample_every),
          progress_(plan_.network_requests()) {
        mmus_.reserve(cfg_.num_gpus);
        for (std::uint32_t g = 0; g < cfg_.num_gpus; ++g)
            mmus_.emplace_back(*this, g, cfg_.fabric.stations_per_gpu, cfg_.tlb, cfg_.walk, frames_);
        streams_ = make_streams(plan_);
        stream_state_.resize(streams_.size());
        for (std::size_t i = 0; i < streams_.size(); ++i) {
            auto& st = stream_state_[i];
            st.port = select_port(cfg_.fabric, streams_[i].src, streams_[i].dst);
            st.first_page = layout_.page_of(plan_.chunk_begin(streams_[i].src));
            st.last_page_of_chunk = layout_.page_of(plan_.chunk_end(streams_[i].src) - 1);
        }
    }

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    const SimConfig& config() const { return cfg_; }
    const CollectivePlan& plan() const { return plan_; }
    const LinkMmu<Simulation>& mmu(std::uint32_t gpu) const { return mmus_[gpu]; }

    RunResult run() {
        if (ran_) throw SimulationError("a Simulation instance runs once");
        ran_ = true;
        const bool real = cfg_.mode == Mode::real;
        data_start_ = real && cfg_.optim.pretranslate_enabled ? cfg_.optim.pretranslate_lead_ns : 0;
        if (real && cfg_.optim.pretranslate_enabled) schedule_pretranslation();
        start_streams(data_start_);

        rtsim::run(queue_, [this](SimTime now, const SimEvent& ev) { dispatch(now, ev); }, cfg_.max_events);

        if (!progress_.done())
            throw SimulationError("collective did not complete: " + std::to_string(progress_.acked()) + " of " +
                                  std::to_string(plan_.network_requests()) + " requests acknowledged");
        for (std::uint32_t g = 0; g < cfg_.num_gpus; ++g) metrics_.set_walks(g, mmus_[g].stats().walks);
        RunResult result;
        result.summary = metrics_.summarize(data_start_);
        result.summary.events = queue_.dispatched();
        result.summary.seed = cfg_.seed;
        result.summary.config = to_json(cfg_);
        result.summary.topology = topology_json(cfg_);
        result.trace = metrics_.trace();
        return result;
    }

    // LinkMmu host interface.
    void schedule(SimTime at, std::uint32_t gpu, MmuEvent ev) {
        queue_.schedule(at, SimEvent{SimEvent::Kind::mmu, ev.kind, gpu, ev.index});
    }

    void translated(std::uint32_t, const TranslationResult& res) {
        Flight& f = flights_[res.ticket];
        f.rt_end = res.rt_end;
        f.outcome = res.outcome;
        f.resolved_by = res.resolved_by;
        f.breakdown = res.breakdown;
        if (f.prefetch) {
            TraceRow row = make_row(f);
            row.rt_outcome = RtOutcome::prefetch;
            row.hbm_done_ns = row.ack_ns = f.rt_end;
            metrics_.on_prefetch_complete(row);
            release(res.ticket);
            return;
        }
        queue_.schedule(f.rt_end + cfg_.fabric.hbm_latency_ns, SimEvent{SimEvent::Kind::hbm_done, {}, 0, res.ticket});
    }

private:
    struct SimEvent {
        enum class Kind : std::uint8_t { data_at_port, data_at_switch, data_at_mmu, mmu, hbm_done, ack_at_switch, ack_at_wg };
        Kind kind = Kind::data_at_port;
        MmuEvent::Kind mmu_kind{};
        std::uint32_t gpu = 0;
        std::uint32_t index = 0;
    };

    struct Flight {
        std::uint64_t id = 0;
        std::uint32_t stream = 0;
        std::uint32_t src = 0;
        std::uint32_t dst = 0;
        std::uint32_t port = 0;
        std::uint64_t offset = 0;
        std::uint64_t page = 0;
        SimTime issue = 0;
        SimTime net_arrive = 0;
        SimTime rt_end = 0;
        SimTime hbm_done = 0;
        RtOutcome outcome = RtOutcome::l1_hit;
        RtOutcome resolved_by = RtOutcome::l1_hit;
        RtBreakdown breakdown;
        bool prefetch = false;
        bool first_of_page = false;
        bool chunk_first_page = false;
    };

    static constexpr std::uint64_t kNoPage = std::numeric_limits<std::uint64_t>::max();

    struct StreamState {
        std::uint32_t port = 0;
        std::uint64_t first_page = 0;
        std::uint64_t last_page_of_chunk = 0;
        std::uint64_t current_page = kNoPage;
        std::uint64_t prefetched_page = kNoPage;
    };

    std::uint32_t station_of(std::uint32_t port) const { return cfg_.fabric.station_of_port(port); }

    std::uint32_t acquire() {
        if (!free_flights_.empty()) {
            auto slot = free_flights_.back();
            free_flights_.pop_back();
            return slot;
        }
        flights_.emplace_back();
        return static_cast<std::uint32_t>(flights_.size() - 1);
    }

    void release(std::uint32_t slot) { free_flights_.push_back(slot); }

    TraceRow make_row(const Flight& f) const {
        TraceRow row;
        row.request_id = f.id;
        row.src = f.src;
        row.dst = f.dst;
        row.station = station_of(f.port);
        row.page_index = f.page;
        row.issue_ns = f.issue;
        row.net_arrive_ns = f.net_arrive;
        row.rt_start_ns = f.net_arrive;
        row.rt_end_ns = f.rt_end;
        row.rt_outcome = f.outcome;
        row.mshr_stall_ns = f.breakdown.mshr_stall_ns;
        row.walker_queue_ns = f.breakdown.walker_queue_ns;
        row.hbm_done_ns = f.hbm_done;
        row.ack_ns = f.hbm_done;
        return row;
    }

    void start_streams(SimTime t) {
        // Round-robin so streams sharing a source port interleave.
        bool progressed = true;
        while (progressed) {
            progressed = false;
            for (std::uint32_t i = 0; i < streams_.size(); ++i) progressed |= inject_one(i, t);
        }
    }

    bool inject_one(std::uint32_t stream_index, SimTime now) {
        auto& stream = streams_[stream_index];
        const auto offset = inject(stream, plan_);
        if (!offset) return false;
        auto& st = stream_state_[stream_index];
        const auto slot = acquire();
        Flight& f = flights_[slot];
        f = Flight{};
        f.id = next_request_id_++;
        f.stream = stream_index;
        f.src = stream.src;
        f.dst = stream.dst;
        f.port = st.port;
        f.offset = *offset;
        f.page = layout_.page_of(*offset);
        f.issue = now;
        f.first_of_page = f.page != st.current_page;
        f.chunk_first_page = f.page == st.first_page;
        if (f.first_of_page) {
            if (st.current_page != kNoPage) metrics_.stream_page_closed(f.dst, st.current_page);
            metrics_.stream_page_opened(f.dst, f.page);
        }
        st.current_page = f.page;
        metrics_.page_in_flight(f.dst, f.page);
        queue_.schedule(fabric_.to_port(now), SimEvent{SimEvent::Kind::data_at_port, {}, f.src, slot});
        return true;
    }

    void schedule_pretranslation() {
        for (std::uint32_t i = 0; i < streams_.size(); ++i) {
            const auto& st = stream_state_[i];
            translate_only(i, st.first_page, 0);
        }
    }

    void translate_only(std::uint32_t stream_index, std::uint64_t page, SimTime now) {
        const auto& stream = streams_[stream_index];
        const auto slot = acquire();
        Flight& f = flights_[slot];
        f = Flight{};
        f.id = next_request_id_++;
        f.stream = stream_index;
        f.src = stream.src;
        f.dst = stream.dst;
        f.port = stream_state_[stream_index].port;
        f.page = page;
        f.issue = f.net_arrive = now;
        f.prefetch = true;
        mmus_[f.dst].translate(slot, station_of(f.port), page, now);
    }

    // Next-page hint once the stream's store stream crosses the trigger point
    // of its current page.
    void maybe_prefetch(const Flight& f, SimTime now) {
        auto& st = stream_state_[f.stream];
        if (f.page >= st.last_page_of_chunk) return;
        const std::uint64_t next = f.page + 1;
        if (st.prefetched_page == next) return;
        const std::uint64_t in_page = (layout_.base() + f.offset) % layout_.page_size();
        const auto trigger = static_cast<std::uint64_t>(cfg_.optim.prefetch_trigger_fraction *
                                                        static_cast<double>(layout_.page_size()));
        if (trigger < in_page || trigger >= in_page + plan_.request_size) return;
        st.prefetched_page = next;
        if (mmus_[f.dst].resident_or_in_flight(station_of(f.port), next)) return;
        translate_only(f.stream, next, now);
    }

    void dispatch(SimTime now, const SimEvent& ev) {
        switch (ev.kind) {
        case SimEvent::Kind::data_at_port: {
            const Flight& f = flights_[ev.index];
            const SimTime departed = fabric_.transmit(f.src, f.port, now, plan_.request_size);
            queue_.schedule(fabric_.to_switch(departed), SimEvent{SimEvent::Kind::data_at_switch, {}, 0, ev.index});
            break;
        }
        case SimEvent::Kind::data_at_switch: {
            const Flight& f = flights_[ev.index];
            const SimTime forwarded = fabric_.forward(f.port, f.dst, now, plan_.request_size);
            queue_.schedule(fabric_.to_station(forwarded), SimEvent{SimEvent::Kind::data_at_mmu, {}, 0, ev.index});
            break;
        }
        case SimEvent::Kind::data_at_mmu: {
            Flight& f = flights_[ev.index];
            f.net_arrive = now;
            if (cfg_.mode == Mode::ideal) {
                translated(f.dst, ideal_translate(ev.index, PageId{GpuId{f.dst}, f.page}, now, frames_));
                break;
            }
            const std::uint32_t dst = f.dst;
            const std::uint32_t station = station_of(f.port);
            const std::uint64_t page = f.page;
            if (cfg_.optim.prefetch_enabled) maybe_prefetch(f, now);
            mmus_[dst].translate(ev.index, station, page, now);
            break;
        }
        case SimEvent::Kind::mmu: mmus_[ev.gpu].handle(MmuEvent{ev.mmu_kind, ev.index}, now); break;
        case SimEvent::Kind::hbm_done: {
            Flight& f = flights_[ev.index];
            f.hbm_done = now;
            const SimTime departed = fabric_.transmit(f.dst, f.port, now, cfg_.fabric.ack_bytes);
            queue_.schedule(fabric_.to_switch(departed), SimEvent{SimEvent::Kind::ack_at_switch, {}, 0, ev.index});
            break;
        }
        case SimEvent::Kind::ack_at_switch: {
            const Flight& f = flights_[ev.index];
            const SimTime forwarded = fabric_.forward(f.port, f.src, now, cfg_.fabric.ack_bytes);
            queue_.schedule(fabric_.to_workgroup(fabric_.to_station(forwarded)),
                            SimEvent{SimEvent::Kind::ack_at_wg, {}, 0, ev.index});
            break;
        }
        case SimEvent::Kind::ack_at_wg: {
            const Flight f = flights_[ev.index];
            TraceRow row = make_row(f);
            row.ack_ns = now;
            metrics_.on_data_complete(row, f.resolved_by, f.breakdown, f.first_of_page, f.chunk_first_page);
            metrics_.page_retired(f.dst, f.page);
            progress_.on_ack(now);
            release(ev.index);
            acknowledge(streams_[f.stream]);
            inject_one(f.stream, now);
            if (streams_[f.stream].drained()) metrics_.stream_page_closed(f.dst, stream_state_[f.stream].current_page);
            break;
        }
        }
    }

    SimConfig cfg_;
    CollectivePlan plan_;
    BufferLayout layout_;
    FrameMap frames_;
    Fabric fabric_;
    MetricsCollector metrics_;
    CollectiveProgress progress_;
    std::vector<LinkMmu<Simulation>> mmus_;
    std::vector<RequestStream> streams_;
    std::vector<StreamState> stream_state_;
    std::vector<Flight> flights_;
    std::vector<std::uint32_t> free_flights_;
    EventQueue<SimEvent> queue_;
    std::uint64_t next_request_id_ = 0;
    SimTime data_start_ = 0;
    bool ran_ = false;
};

inline RunResult simulate(const SimConfig& cfg) {
    Simulation sim(cfg);
    return sim.run();
}

}  // namespace rtsim
