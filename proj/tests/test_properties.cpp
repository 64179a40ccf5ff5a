#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "rtsim/simulation.hpp"

using namespace rtsim;

namespace {

std::string trace_text(const RunResult& r) {
    std::ostringstream os;
    write_trace_csv(os, r.trace);
    return os.str();
}

std::uint64_t sum(const std::vector<std::uint64_t>& v) {
    std::uint64_t n = 0;
    for (auto x : v) n += x;
    return n;
}

// Two GPUs, two 512 B pages per chunk, four 256 B stores per stream.
SimConfig micro() {
    SimConfig c;
    c.num_gpus = 2;
    c.request_size = 256;
    c.page_size = 512;
    c.collective_size = 2048;
    return c;
}

}  // namespace

TEST(Determinism, RepeatRunsAreByteIdentical) {
    for (auto mapping : {SpaMapping::identity, SpaMapping::permuted}) {
        SimConfig c;
        c.num_gpus = 8;
        c.collective_size = 4ull << 20;
        c.spa_mapping = mapping;
        c.optim.prefetch_enabled = true;
        const auto a = simulate(c);
        const auto b = simulate(c);
        EXPECT_EQ(trace_text(a), trace_text(b));
        EXPECT_EQ(summary_text(a.summary), summary_text(b.summary));
    }
}

TEST(Conservation, EveryRequestIsAcknowledgedOnce) {
    SimConfig c;
    c.num_gpus = 8;
    c.collective_size = 2ull << 20;
    const auto r = simulate(c);
    const auto plan = plan_for(c);
    EXPECT_EQ(r.summary.total_requests, plan.network_requests());
    ASSERT_EQ(r.trace.size(), plan.network_requests());
    std::vector<std::uint64_t> ids;
    for (const auto& row : r.trace) ids.push_back(row.request_id);
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) ASSERT_EQ(ids[i], i);
    std::uint64_t outcomes = 0;
    for (auto n : r.summary.outcome_counts) outcomes += n;
    EXPECT_EQ(outcomes, r.summary.total_requests);
}

TEST(Conservation, IdealBeatsReal) {
    for (std::uint32_t n : {2u, 4u, 16u}) {
        SimConfig c;
        c.num_gpus = n;
        c.trace_enabled = false;
        const auto real = simulate(c).summary;
        c.mode = Mode::ideal;
        const auto ideal = simulate(c).summary;
        EXPECT_LT(ideal.completion_ns, real.completion_ns) << n;
        EXPECT_EQ(ideal.rt_latency.max, 0u);
    }
}

TEST(Ideal, UncontendedRoundTripIsConstant) {
    SimConfig c;
    c.num_gpus = 2;
    c.max_outstanding_per_wg = 1;
    c.mode = Mode::ideal;
    const auto r = simulate(c);
    const SimTime expected = idle_forward_latency(c.fabric, c.request_size) + c.fabric.hbm_latency_ns +
                             idle_return_latency(c.fabric);
    ASSERT_FALSE(r.trace.empty());
    for (const auto& row : r.trace) EXPECT_EQ(row.ack_ns - row.issue_ns, expected) << row.request_id;
    EXPECT_EQ(r.summary.completion_ns, expected * plan_for(c).requests_per_stream());
}

TEST(MicroOracle, HandComputedTimeline) {
    const auto r = simulate(micro());
    ASSERT_EQ(r.trace.size(), 8u);
    for (std::uint32_t src = 0; src < 2; ++src) {
        std::vector<TraceRow> rows;
        for (const auto& row : r.trace)
            if (row.src == src) rows.push_back(row);
        std::sort(rows.begin(), rows.end(),
                  [](const TraceRow& a, const TraceRow& b) { return a.request_id < b.request_id; });
        ASSERT_EQ(rows.size(), 4u);
        const std::uint64_t page0 = src * 2;
        const std::vector<SimTime> arrive{1023, 1026, 1029, 1032};
        const std::vector<SimTime> rt_end{1973, 1973, 1979, 1979};
        const std::vector<RtOutcome> outcome{RtOutcome::walk_full, RtOutcome::l1_mshr_hum, RtOutcome::walk_full,
                                             RtOutcome::l1_mshr_hum};
        const std::vector<SimTime> ack{3144, 3145, 3150, 3151};
        for (std::size_t i = 0; i < 4; ++i) {
            const auto& row = rows[i];
            SCOPED_TRACE(row.request_id);
            EXPECT_EQ(row.dst, 1 - src);
            EXPECT_EQ(row.station, 1u);
            EXPECT_EQ(row.page_index, page0 + i / 2);
            EXPECT_EQ(row.issue_ns, 0u);
            EXPECT_EQ(row.net_arrive_ns, arrive[i]);
            EXPECT_EQ(row.rt_end_ns, rt_end[i]);
            EXPECT_EQ(row.rt_outcome, outcome[i]);
            EXPECT_EQ(row.hbm_done_ns, rt_end[i] + 150);
            EXPECT_EQ(row.ack_ns, ack[i]);
        }
    }
    EXPECT_EQ(r.summary.completion_ns, 3151u);
    EXPECT_EQ(sum(r.summary.walks_per_destination), 4u);
    EXPECT_EQ(r.summary.outcome(RtOutcome::l1_mshr_hum), 4u);
    EXPECT_EQ(r.summary.hum_resolution[static_cast<std::size_t>(RtOutcome::walk_full)], 4u);
}

TEST(Walks, OnlyFirstRequestOfAPageWalks) {
    for (std::uint32_t n : {4u, 8u, 16u}) {
        SimConfig c;
        c.num_gpus = n;
        c.collective_size = 16ull << 20;
        c.trace_enabled = false;
        const auto s = simulate(c).summary;
        EXPECT_EQ(s.walks_on_non_first_request, 0u) << n;
        // Without hints every walk belongs to some data request.
        EXPECT_EQ(sum(s.walks_per_destination), s.walk_requests());
        EXPECT_EQ(sum(s.data_walks_per_destination), s.walk_requests());
        // Each destination page walks at most once while L2 holds it.
        for (std::uint32_t d = 0; d < n; ++d)
            EXPECT_LE(s.walks_per_destination[d], s.distinct_pages_per_destination[d]);
    }
}

TEST(WorkingSet, StreamPagesBoundedByIncomingStreams) {
    for (std::uint32_t n : {2u, 4u, 8u, 16u}) {
        SimConfig c;
        c.num_gpus = n;
        c.collective_size = 64ull << 20;
        c.trace_enabled = false;
        const auto s = simulate(c).summary;
        EXPECT_LE(s.peak_page_working_set, n - 1) << n;
        EXPECT_GE(s.peak_inflight_pages, s.peak_page_working_set) << n;
        EXPECT_LE(s.peak_inflight_pages, 2 * (n - 1)) << n;
    }
}

// Property: random small configurations keep every per-request invariant.
TEST(RandomConfigs, RowInvariantsHold) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 12; ++trial) {
        SimConfig c;
        c.num_gpus = 2u << (rng() % 3);
        c.request_size = 256u << (rng() % 5);
        c.page_size = 4096u << (rng() % 4);
        c.collective_size = c.num_gpus * c.request_size * (1 + rng() % 64);
        c.max_outstanding_per_wg = 1 + static_cast<std::uint32_t>(rng() % 32);
        c.tlb.l1_mshr_entries = 1 + static_cast<std::uint32_t>(rng() % 8);
        c.walk.walkers = 1 + static_cast<std::uint32_t>(rng() % 4);
        c.optim.prefetch_enabled = rng() % 2;
        c.optim.pretranslate_enabled = rng() % 2;
        c.spa_mapping = rng() % 2 ? SpaMapping::permuted : SpaMapping::identity;
        SCOPED_TRACE(to_json(c).dump());
        const auto r = simulate(c);
        const SimTime fwd = idle_forward_latency(c.fabric, c.request_size);
        const SimTime ret = idle_return_latency(c.fabric);
        for (const auto& row : r.trace) {
            if (row.rt_outcome == RtOutcome::prefetch) continue;
            ASSERT_GE(row.net_arrive_ns, row.issue_ns + fwd);
            ASSERT_GE(row.rt_end_ns, row.rt_start_ns + c.tlb.l1_hit_latency_ns);
            ASSERT_EQ(row.hbm_done_ns, row.rt_end_ns + c.fabric.hbm_latency_ns);
            ASSERT_GE(row.ack_ns, row.hbm_done_ns + ret);
            ASSERT_LE(row.ack_ns, r.summary.completion_ns + r.summary.data_start_ns);
        }
        EXPECT_EQ(r.summary.total_requests, plan_for(c).network_requests());
        EXPECT_LE(r.summary.peak_page_working_set, c.num_gpus - 1);
    }
}
