#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "rtsim/simulation.hpp"

using namespace rtsim;

namespace {

SimConfig base(std::uint32_t gpus, std::uint64_t size) {
    SimConfig c;
    c.num_gpus = gpus;
    c.collective_size = size;
    return c;
}

std::size_t count_outcome(const std::vector<TraceRow>& rows, RtOutcome o) {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [o](const TraceRow& r) { return r.rt_outcome == o; }));
}

}  // namespace

TEST(Pretranslate, WarmupFinishesBeforeDataAndFirstRequestsHit) {
    SimConfig c = base(16, 1ull << 20);
    c.optim.pretranslate_enabled = true;
    const auto r = simulate(c);
    EXPECT_EQ(r.summary.data_start_ns, 2000u);
    EXPECT_EQ(r.summary.prefetch_requests, 240u);
    std::map<std::uint32_t, int> per_dst;
    for (const auto& row : r.trace)
        if (row.rt_outcome == RtOutcome::prefetch) {
            ++per_dst[row.dst];
            EXPECT_EQ(row.issue_ns, 0u);
            EXPECT_LE(row.rt_end_ns, 950u);
        }
    for (const auto& [dst, n] : per_dst) EXPECT_EQ(n, 15) << "dst " << dst;

    // First data request of every stream.
    std::map<std::pair<std::uint32_t, std::uint32_t>, TraceRow> first;
    for (const auto& row : r.trace) {
        if (row.rt_outcome == RtOutcome::prefetch) continue;
        EXPECT_GE(row.net_arrive_ns, 2000u + 1023u);
        auto key = std::make_pair(row.src, row.dst);
        if (!first.count(key) || row.request_id < first[key].request_id) first[key] = row;
    }
    ASSERT_EQ(first.size(), 240u);
    for (const auto& [key, row] : first)
        EXPECT_TRUE(row.rt_outcome == RtOutcome::l1_hit || row.rt_outcome == RtOutcome::l2_hit);
    EXPECT_EQ(r.summary.first_page_full_walks, 0u);
    EXPECT_EQ(r.summary.walk_requests(), 0u);
}

TEST(Pretranslate, DisabledEmitsNoPrefetchRows) {
    const auto r = simulate(base(8, 1ull << 20));
    EXPECT_EQ(count_outcome(r.trace, RtOutcome::prefetch), 0u);
    EXPECT_EQ(r.summary.prefetch_requests, 0u);
    EXPECT_EQ(r.summary.data_start_ns, 0u);
}

TEST(Pretranslate, ZeroLeadRacesTheDataPhase) {
    // With a zero-latency fabric the first stores reach the MMU together with
    // the warmup, so they merge into its misses.
    SimConfig c = base(4, 1ull << 20);
    c.optim.pretranslate_enabled = true;
    c.optim.pretranslate_lead_ns = 0;
    c.fabric.link_latency_ns = c.fabric.switch_latency_ns = c.fabric.local_fabric_latency_ns = 0;
    c.fabric.unlimited_bandwidth = true;
    const auto r = simulate(c);
    EXPECT_GT(r.summary.outcome(RtOutcome::l1_mshr_hum), 0u);
    EXPECT_GT(r.summary.hum_resolution[static_cast<std::size_t>(RtOutcome::walk_full)] +
                  r.summary.hum_resolution[static_cast<std::size_t>(RtOutcome::l2_mshr_hum)],
              0u);
}

TEST(Pretranslate, NoFirstPageFullWalksAcrossScales) {
    for (std::uint32_t n : {4u, 8u, 16u})
        for (std::uint64_t mb : {1ull, 16ull}) {
            SimConfig c = base(n, mb << 20);
            c.optim.pretranslate_enabled = true;
            c.optim.pretranslate_lead_ns = 950;
            c.trace_enabled = false;
            EXPECT_EQ(simulate(c).summary.first_page_full_walks, 0u) << n << " GPUs " << mb << " MB";
        }
}

TEST(Prefetch, FiresAtHalfPage) {
    SimConfig c = base(2, 8ull << 20);
    c.optim.prefetch_enabled = true;
    const auto r = simulate(c);
    for (std::uint32_t src = 0; src < 2; ++src) {
        const std::uint32_t dst = 1 - src;
        std::vector<TraceRow> data, pre;
        for (const auto& row : r.trace)
            if (row.src == src && row.dst == dst) (row.rt_outcome == RtOutcome::prefetch ? pre : data).push_back(row);
        ASSERT_EQ(pre.size(), 1u);
        std::sort(data.begin(), data.end(),
                  [](const TraceRow& a, const TraceRow& b) { return a.request_id < b.request_id; });
        const std::uint64_t first_page = src * 2;
        EXPECT_EQ(pre[0].page_index, first_page + 1);
        // Data rows are in offset order; the trigger is the request holding byte 1 MiB.
        const auto& trigger = data.at((1u << 20) / c.request_size);
        EXPECT_EQ(trigger.page_index, first_page);
        EXPECT_EQ(pre[0].issue_ns, trigger.net_arrive_ns);
    }
}

TEST(Prefetch, LastPageOfChunkDoesNotPrefetch) {
    SimConfig c = base(2, 4ull << 20);
    c.optim.prefetch_enabled = true;
    EXPECT_EQ(simulate(c).summary.prefetch_requests, 0u);
}

TEST(Prefetch, SuppressedWhenNextPageAlreadyResident) {
    // Destination 0 holds chunks [3,6), [6,9) and [9,12) MiB. The stream from
    // GPU 3 walks page 4 long before GPU 2's stream reaches its trigger.
    SimConfig c = base(4, 12ull << 20);
    c.optim.prefetch_enabled = true;
    const auto r = simulate(c);
    std::vector<std::uint64_t> pages;
    for (const auto& row : r.trace)
        if (row.rt_outcome == RtOutcome::prefetch && row.dst == 0) pages.push_back(row.page_index);
    std::sort(pages.begin(), pages.end());
    EXPECT_EQ(pages, (std::vector<std::uint64_t>{2, 5}));
}

TEST(Optimizations, PreserveRequestCountAndBoundWalks) {
    SimConfig c = base(16, 64ull << 20);
    c.trace_enabled = false;
    const auto baseline = simulate(c).summary;
    auto total_walks = [](const RunSummary& s) {
        std::uint64_t n = 0;
        for (auto w : s.walks_per_destination) n += w;
        return n;
    };
    for (int mask = 1; mask < 4; ++mask) {
        SimConfig o = c;
        o.optim.pretranslate_enabled = mask & 1;
        o.optim.prefetch_enabled = mask & 2;
        const auto s = simulate(o).summary;
        EXPECT_EQ(s.total_requests, baseline.total_requests);
        EXPECT_LE(total_walks(s), total_walks(baseline) + s.prefetch_requests);
    }
}
