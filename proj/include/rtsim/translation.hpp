#pragma once

// Destination-side Link MMU: reverse translation of incoming NPAs through
// per-station L1 Link TLBs with MSHRs, a shared set-associative L2 Link TLB
// with its own MSHR, per-level page-walk caches, and a pool of parallel
// page-table walkers. Fills are mostly inclusive: a resolved translation is
// installed in the L2 and in the L1 of every station waiting on it, and
// evictions never invalidate the other level.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rtsim/address.hpp"
#include "rtsim/engine.hpp"
#include "rtsim/tlb.hpp"

namespace rtsim {

enum class RtOutcome : std::uint8_t {
    l1_hit,
    l1_mshr_hum,
    l2_hit,
    l2_mshr_hum,
    walk_partial_1,
    walk_partial_2,
    walk_partial_3,
    walk_partial_4,
    walk_full,
    ideal,
    prefetch,
};

inline constexpr std::size_t kOutcomeCount = 11;

inline constexpr std::array<std::string_view, kOutcomeCount> kOutcomeNames = {
    "L1_HIT",         "L1_MSHR_HUM",    "L2_HIT",         "L2_MSHR_HUM",
    "WALK_PARTIAL_1", "WALK_PARTIAL_2", "WALK_PARTIAL_3", "WALK_PARTIAL_4",
    "WALK_FULL",      "IDEAL",          "PREFETCH",
};

inline std::string_view to_string(RtOutcome o) { return kOutcomeNames[static_cast<std::size_t>(o)]; }

inline std::optional<RtOutcome> outcome_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kOutcomeCount; ++i)
        if (kOutcomeNames[i] == name) return static_cast<RtOutcome>(i);
    return std::nullopt;
}

inline bool is_walk(RtOutcome o) { return o >= RtOutcome::walk_partial_1 && o <= RtOutcome::walk_full; }

inline RtOutcome walk_outcome(std::uint32_t levels_skipped) {
    if (levels_skipped == 0) return RtOutcome::walk_full;
    return static_cast<RtOutcome>(static_cast<std::uint8_t>(RtOutcome::walk_partial_1) + levels_skipped - 1);
}

struct TlbConfig {
    std::uint32_t l1_entries = 32;  // fully associative
    SimTime l1_hit_latency_ns = 50;
    std::uint32_t l1_mshr_entries = 256;
    std::uint32_t l2_entries = 512;
    std::uint32_t l2_associativity = 2;
    SimTime l2_hit_latency_ns = 100;
    std::uint32_t l2_mshr_entries = 256;
};

struct WalkConfig {
    std::uint32_t levels = 5;
    std::uint32_t bits_per_level = 9;
    // Page-walk cache sizes from the root level down to the level above the leaf.
    std::vector<std::uint32_t> pwc_entries = {16, 32, 64, 128};
    std::uint32_t pwc_associativity = 2;
    SimTime pwc_latency_ns = 50;
    std::uint32_t walkers = 100;
    SimTime memory_access_ns = 150;
};

inline void validate(const TlbConfig& t) {
    if (t.l1_entries == 0) throw std::invalid_argument("translation.l1_entries: must be positive");
    if (t.l2_entries == 0) throw std::invalid_argument("translation.l2_entries: must be positive");
    if (t.l2_associativity == 0 || t.l2_entries % t.l2_associativity != 0)
        throw std::invalid_argument("translation.l2_associativity: must divide l2_entries");
    if (t.l1_mshr_entries == 0) throw std::invalid_argument("translation.l1_mshr_entries: must be positive");
    if (t.l2_mshr_entries == 0) throw std::invalid_argument("translation.l2_mshr_entries: must be positive");
}

inline void validate(const WalkConfig& w) {
    if (w.levels < 2) throw std::invalid_argument("walk.levels: must be at least 2");
    if (w.pwc_entries.size() != w.levels - 1)
        throw std::invalid_argument("walk.pwc_entries: needs one size per non-leaf level");
    for (auto n : w.pwc_entries)
        if (n == 0 || w.pwc_associativity == 0 || n % w.pwc_associativity != 0)
            throw std::invalid_argument("walk.pwc_associativity: must divide every pwc size");
    if (w.walkers == 0) throw std::invalid_argument("walk.walkers: must be positive");
    if (w.bits_per_level == 0 || w.bits_per_level > 16)
        throw std::invalid_argument("walk.bits_per_level: must be in [1, 16]");
}

// Time components of one translation. They always sum to rt_end - rt_start.
struct RtBreakdown {
    SimTime probe_ns = 0;
    SimTime mshr_stall_ns = 0;
    SimTime walker_queue_ns = 0;
    SimTime walk_memory_ns = 0;
    SimTime merge_wait_ns = 0;

    SimTime total() const { return probe_ns + mshr_stall_ns + walker_queue_ns + walk_memory_ns + merge_wait_ns; }
};

struct TranslationResult {
    std::uint32_t ticket = 0;
    SimTime rt_start = 0;
    SimTime rt_end = 0;
    RtOutcome outcome = RtOutcome::l1_hit;
    // For L1_MSHR_HUM: how the miss it merged into was resolved.
    RtOutcome resolved_by = RtOutcome::l1_hit;
    std::uint64_t frame = 0;
    RtBreakdown breakdown;
};

inline TranslationResult ideal_translate(std::uint32_t ticket, const PageId& page, SimTime t, const FrameMap& frames) {
    TranslationResult r;
    r.ticket = ticket;
    r.rt_start = r.rt_end = t;
    r.outcome = r.resolved_by = RtOutcome::ideal;
    r.frame = frames.frame(page);
    return r;
}

// FIFO pool of parallel walkers.
class WalkerPool {
public:
    explicit WalkerPool(std::uint32_t walkers) : capacity_(walkers) {}

    std::uint32_t busy() const { return busy_; }
    std::size_t queued() const { return queue_.size(); }

    // True when `id` got a walker immediately; otherwise it waits in FIFO order.
    bool acquire(std::uint32_t id) {
        if (busy_ < capacity_) {
            ++busy_;
            return true;
        }
        queue_.push_back(id);
        return false;
    }

    // Frees one walker; returns the queued walk that inherits it, if any.
    std::optional<std::uint32_t> release() {
        if (busy_ == 0) throw SimulationError("walker released while idle");
        if (!queue_.empty()) {
            auto id = queue_.front();
            queue_.pop_front();
            return id;
        }
        --busy_;
        return std::nullopt;
    }

private:
    std::uint32_t capacity_;
    std::uint32_t busy_ = 0;
    std::deque<std::uint32_t> queue_;
};

struct MmuEvent {
    enum class Kind : std::uint8_t { l1_probe_done, l2_probe_done, pwc_probe_done, walk_done };
    Kind kind = Kind::l1_probe_done;
    std::uint32_t index = 0;
};

struct MmuStats {
    std::uint64_t walks = 0;
    std::uint64_t full_walks = 0;
    std::uint64_t l1_evictions = 0;
    std::uint64_t l2_evictions = 0;
    std::uint64_t mshr_stalls = 0;
    std::uint32_t peak_walks_in_flight = 0;
};

// Host must provide:
//   void schedule(SimTime at, std::uint32_t gpu, MmuEvent ev);
//   void translated(std::uint32_t gpu, const TranslationResult& result);
// The host routes scheduled events back to handle().
template <typename Host>
class LinkMmu {
public:
    LinkMmu(Host& host, std::uint32_t gpu, std::uint32_t stations, const TlbConfig& tlb, const WalkConfig& walk,
            const FrameMap& frames)
        : host_(host),
          gpu_(gpu),
          tlb_cfg_(tlb),
          walk_cfg_(walk),
          frames_(frames),
          l2_(tlb.l2_entries, tlb.l2_associativity),
          walkers_(walk.walkers),
          l1_mshr_(stations),
          l1_stalled_(stations) {
        validate(tlb);
        validate(walk);
        l1_.reserve(stations);
        for (std::uint32_t s = 0; s < stations; ++s) l1_.emplace_back(tlb.l1_entries, tlb.l1_entries);
        for (auto n : walk.pwc_entries) pwc_.emplace_back(n, walk.pwc_associativity);
    }

    LinkMmu(const LinkMmu&) = delete;
    LinkMmu& operator=(const LinkMmu&) = delete;
    LinkMmu(LinkMmu&&) = default;

    std::uint32_t gpu() const { return gpu_; }
    const MmuStats& stats() const { return stats_; }
    std::uint32_t walks_in_flight() const { return static_cast<std::uint32_t>(l2_mshr_.size()) - l2_probing_; }

    // Starts translating `page` for the request identified by `ticket`.
    void translate(std::uint32_t ticket, std::uint32_t station, std::uint64_t page, SimTime now) {
        const auto id = alloc(requests_, free_requests_);
        Request& r = requests_[id];
        r = Request{};
        r.ticket = ticket;
        r.station = station;
        r.page = page;
        r.start = now;
        r.breakdown.probe_ns = tlb_cfg_.l1_hit_latency_ns;
        host_.schedule(now + tlb_cfg_.l1_hit_latency_ns, gpu_, MmuEvent{MmuEvent::Kind::l1_probe_done, id});
    }

    void handle(const MmuEvent& ev, SimTime now) {
        switch (ev.kind) {
        case MmuEvent::Kind::l1_probe_done: on_l1_probe(ev.index, now); break;
        case MmuEvent::Kind::l2_probe_done: on_l2_probe(ev.index, now); break;
        case MmuEvent::Kind::pwc_probe_done: on_pwc_probe(ev.index, now); break;
        case MmuEvent::Kind::walk_done: on_walk_done(ev.index, now); break;
        }
    }

    // Installs a completed translation in `station`'s L1 and in the L2.
    void fill(std::uint32_t station, std::uint64_t page, std::uint64_t frame) {
        if (l1_[station].insert(page, frame)) ++stats_.l1_evictions;
        if (l2_.insert(page, frame)) ++stats_.l2_evictions;
    }

    // Records the upper levels a walk for `page` traversed.
    void fill_walk_caches(std::uint64_t page) {
        for (std::uint32_t level = 1; level < walk_cfg_.levels; ++level)
            pwc_[level - 1].insert(pwc_tag(page, level), 0);
    }

    // Deepest page-table level whose entry is cached, 0 if none.
    std::uint32_t cached_levels(std::uint64_t page) {
        for (std::uint32_t level = walk_cfg_.levels - 1; level >= 1; --level)
            if (pwc_[level - 1].lookup(pwc_tag(page, level))) return level;
        return 0;
    }

    bool l1_contains(std::uint32_t station, std::uint64_t page) const { return l1_[station].contains(page); }
    bool l2_contains(std::uint64_t page) const { return l2_.contains(page); }
    bool miss_in_flight(std::uint32_t station, std::uint64_t page) const {
        return l1_mshr_[station].count(page) != 0 || l2_mshr_.count(page) != 0;
    }
    // Resident in the station's L1 or the L2, or already being resolved.
    bool resident_or_in_flight(std::uint32_t station, std::uint64_t page) const {
        return l1_contains(station, page) || l2_contains(page) || miss_in_flight(station, page);
    }

    std::size_t l1_mshr_occupancy(std::uint32_t station) const { return l1_mshr_[station].size(); }
    std::size_t l2_mshr_occupancy() const { return l2_mshr_.size(); }
    const LruCache& l1(std::uint32_t station) const { return l1_[station]; }
    const LruCache& l2() const { return l2_; }

private:
    struct Request {
        std::uint32_t ticket = 0;
        std::uint32_t station = 0;
        std::uint64_t page = 0;
        SimTime start = 0;
        SimTime waiting_since = 0;
        RtBreakdown breakdown;
    };

    // One L1 MSHR entry: a primary request plus hit-under-miss waiters.
    struct L1Miss {
        std::uint32_t station = 0;
        std::uint64_t page = 0;
        std::uint32_t primary = 0;
        std::vector<std::uint32_t> waiters;
    };

    // One L2 MSHR entry: the L1 misses it resolves; the first one owns the walk.
    struct L2Miss {
        std::uint64_t page = 0;
        std::vector<std::uint32_t> l1_misses;
        std::uint32_t levels_skipped = 0;
        SimTime queued_at = 0;
    };

    template <typename T>
    static std::uint32_t alloc(std::vector<T>& pool, std::vector<std::uint32_t>& free) {
        if (!free.empty()) {
            auto id = free.back();
            free.pop_back();
            return id;
        }
        pool.emplace_back();
        return static_cast<std::uint32_t>(pool.size() - 1);
    }

    std::uint64_t pwc_tag(std::uint64_t page, std::uint32_t level) const {
        return page >> (walk_cfg_.bits_per_level * (walk_cfg_.levels - level));
    }

    void finish(std::uint32_t req_id, SimTime now, RtOutcome outcome, RtOutcome resolved_by) {
        Request& r = requests_[req_id];
        TranslationResult res;
        res.ticket = r.ticket;
        res.rt_start = r.start;
        res.rt_end = now;
        res.outcome = outcome;
        res.resolved_by = resolved_by;
        res.frame = frames_.frame(PageId{GpuId{gpu_}, r.page});
        res.breakdown = r.breakdown;
        if (res.breakdown.total() != now - r.start)
            throw SimulationError("translation latency does not decompose into its components");
        free_requests_.push_back(req_id);
        host_.translated(gpu_, res);
    }

    void on_l1_probe(std::uint32_t req_id, SimTime now) {
        Request& r = requests_[req_id];
        if (l1_[r.station].lookup(r.page)) {
            finish(req_id, now, RtOutcome::l1_hit, RtOutcome::l1_hit);
            return;
        }
        auto& mshr = l1_mshr_[r.station];
        if (auto it = mshr.find(r.page); it != mshr.end()) {
            r.waiting_since = now;
            l1_misses_[it->second].waiters.push_back(req_id);
            return;
        }
        if (mshr.size() >= tlb_cfg_.l1_mshr_entries) {
            r.waiting_since = now;
            ++stats_.mshr_stalls;
            l1_stalled_[r.station].push_back(req_id);
            return;
        }
        const auto miss_id = alloc(l1_misses_, free_l1_misses_);
        L1Miss& m = l1_misses_[miss_id];
        m.station = r.station;
        m.page = r.page;
        m.primary = req_id;
        m.waiters.clear();
        mshr.emplace(r.page, miss_id);
        r.breakdown.probe_ns += tlb_cfg_.l2_hit_latency_ns;
        host_.schedule(now + tlb_cfg_.l2_hit_latency_ns, gpu_, MmuEvent{MmuEvent::Kind::l2_probe_done, miss_id});
    }

    void on_l2_probe(std::uint32_t miss_id, SimTime now) {
        const std::uint64_t page = l1_misses_[miss_id].page;
        Request& primary = requests_[l1_misses_[miss_id].primary];
        if (auto frame = l2_.lookup(page)) {
            resolve_l1_miss(miss_id, now, RtOutcome::l2_hit, *frame);
            return;
        }
        if (auto it = l2_mshr_.find(page); it != l2_mshr_.end()) {
            primary.waiting_since = now;
            l2_misses_[it->second].l1_misses.push_back(miss_id);
            return;
        }
        if (l2_mshr_.size() >= tlb_cfg_.l2_mshr_entries) {
            primary.waiting_since = now;
            ++stats_.mshr_stalls;
            l2_stalled_.push_back(miss_id);
            return;
        }
        const auto walk_id = alloc(l2_misses_, free_l2_misses_);
        L2Miss& w = l2_misses_[walk_id];
        w.page = page;
        w.l1_misses.assign(1, miss_id);
        w.levels_skipped = 0;
        l2_mshr_.emplace(page, walk_id);
        ++l2_probing_;
        primary.breakdown.probe_ns += walk_cfg_.pwc_latency_ns;
        host_.schedule(now + walk_cfg_.pwc_latency_ns, gpu_, MmuEvent{MmuEvent::Kind::pwc_probe_done, walk_id});
    }

    void on_pwc_probe(std::uint32_t walk_id, SimTime now) {
        L2Miss& w = l2_misses_[walk_id];
        w.levels_skipped = cached_levels(w.page);
        w.queued_at = now;
        --l2_probing_;
        ++stats_.walks;
        if (w.levels_skipped == 0) ++stats_.full_walks;
        if (walkers_.acquire(walk_id)) start_walk(walk_id, now);
    }

    void start_walk(std::uint32_t walk_id, SimTime now) {
        L2Miss& w = l2_misses_[walk_id];
        Request& primary = requests_[l1_misses_[w.l1_misses.front()].primary];
        const SimTime memory = (walk_cfg_.levels - w.levels_skipped) * walk_cfg_.memory_access_ns;
        primary.breakdown.walker_queue_ns += now - w.queued_at;
        primary.breakdown.walk_memory_ns += memory;
        if (walkers_.busy() > stats_.peak_walks_in_flight) stats_.peak_walks_in_flight = walkers_.busy();
        host_.schedule(now + memory, gpu_, MmuEvent{MmuEvent::Kind::walk_done, walk_id});
    }

    void on_walk_done(std::uint32_t walk_id, SimTime now) {
        if (auto next = walkers_.release()) start_walk(*next, now);
        L2Miss& w = l2_misses_[walk_id];
        const std::uint64_t page = w.page;
        fill_walk_caches(page);
        const std::uint64_t frame = frames_.frame(PageId{GpuId{gpu_}, page});
        if (l2_.insert(page, frame)) ++stats_.l2_evictions;
        const RtOutcome walked = walk_outcome(w.levels_skipped);
        const std::vector<std::uint32_t> misses = std::move(w.l1_misses);
        l2_mshr_.erase(page);
        free_l2_misses_.push_back(walk_id);
        for (std::size_t i = 0; i < misses.size(); ++i) {
            const auto miss_id = misses[i];
            Request& primary = requests_[l1_misses_[miss_id].primary];
            if (i > 0) primary.breakdown.merge_wait_ns += now - primary.waiting_since;
            resolve_l1_miss(miss_id, now, i == 0 ? walked : RtOutcome::l2_mshr_hum, frame);
        }
        drain_l2_stalls(now);
    }

    // Completes an L1 MSHR entry: fills the station's L1 and releases its waiters.
    void resolve_l1_miss(std::uint32_t miss_id, SimTime now, RtOutcome primary_outcome, std::uint64_t frame) {
        L1Miss& m = l1_misses_[miss_id];
        const std::uint32_t station = m.station;
        const std::uint64_t page = m.page;
        if (l1_[station].insert(page, frame)) ++stats_.l1_evictions;
        const std::uint32_t primary = m.primary;
        const std::vector<std::uint32_t> waiters = std::move(m.waiters);
        l1_mshr_[station].erase(page);
        free_l1_misses_.push_back(miss_id);
        finish(primary, now, primary_outcome, primary_outcome);
        for (auto req_id : waiters) {
            requests_[req_id].breakdown.merge_wait_ns += now - requests_[req_id].waiting_since;
            finish(req_id, now, RtOutcome::l1_mshr_hum, primary_outcome);
        }
        drain_l1_stalls(station, now);
    }

    void drain_l1_stalls(std::uint32_t station, SimTime now) {
        auto& q = l1_stalled_[station];
        while (!q.empty() && l1_mshr_[station].size() < tlb_cfg_.l1_mshr_entries) {
            const auto req_id = q.front();
            q.pop_front();
            requests_[req_id].breakdown.mshr_stall_ns += now - requests_[req_id].waiting_since;
            on_l1_probe(req_id, now);
        }
    }

    void drain_l2_stalls(SimTime now) {
        while (!l2_stalled_.empty() && l2_mshr_.size() < tlb_cfg_.l2_mshr_entries) {
            const auto miss_id = l2_stalled_.front();
            l2_stalled_.pop_front();
            Request& primary = requests_[l1_misses_[miss_id].primary];
            primary.breakdown.mshr_stall_ns += now - primary.waiting_since;
            on_l2_probe(miss_id, now);
        }
    }

    Host& host_;
    std::uint32_t gpu_;
    TlbConfig tlb_cfg_;
    WalkConfig walk_cfg_;
    const FrameMap& frames_;

    std::vector<LruCache> l1_;
    LruCache l2_;
    std::vector<LruCache> pwc_;
    WalkerPool walkers_;

    std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> l1_mshr_;
    std::unordered_map<std::uint64_t, std::uint32_t> l2_mshr_;
    std::uint32_t l2_probing_ = 0;
    std::vector<std::deque<std::uint32_t>> l1_stalled_;
    std::deque<std::uint32_t> l2_stalled_;

    std::vector<Request> requests_;
    std::vector<std::uint32_t> free_requests_;
    std::vector<L1Miss> l1_misses_;
    std::vector<std::uint32_t> free_l1_misses_;
    std::vector<L2Miss> l2_misses_;
    std::vector<std::uint32_t> free_l2_misses_;

    MmuStats stats_;
};

}  // namespace rtsim
