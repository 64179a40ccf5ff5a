#include <gtest/gtest.h>

#include <sstream>

#include "rtsim/simulation.hpp"

using namespace rtsim;

namespace {

TraceRow row(std::uint64_t id, SimTime issue, SimTime arrive, SimTime rt_end, SimTime ack,
             RtOutcome o = RtOutcome::l1_hit) {
    TraceRow r;
    r.request_id = id;
    r.issue_ns = issue;
    r.net_arrive_ns = r.rt_start_ns = arrive;
    r.rt_end_ns = rt_end;
    r.hbm_done_ns = rt_end + 150;
    r.ack_ns = ack;
    r.rt_outcome = o;
    return r;
}

RtBreakdown probe(SimTime ns) {
    RtBreakdown b;
    b.probe_ns = ns;
    return b;
}

std::string csv(const std::vector<TraceRow>& rows) {
    std::ostringstream os;
    write_trace_csv(os, rows);
    return os.str();
}

}  // namespace

TEST(Histogram, NearestRankQuantiles) {
    Histogram h;
    for (SimTime v = 1; v <= 100; ++v) h.add(v);
    const auto s = h.stats();
    EXPECT_DOUBLE_EQ(s.mean, 50.5);
    EXPECT_EQ(s.median, 50u);
    EXPECT_EQ(s.p99, 99u);
    EXPECT_EQ(s.max, 100u);
    Histogram one;
    one.add(7);
    EXPECT_EQ(one.stats().median, 7u);
    EXPECT_EQ(one.stats().p99, 7u);
}

TEST(Collector, RejectsRowsOutOfOrder) {
    MetricsCollector m(2, 150, true, 1);
    EXPECT_THROW(m.on_data_complete(row(0, 10, 5, 60, 2000), RtOutcome::l1_hit, probe(55), true, true),
                 SimulationError);
    TraceRow bad_hbm = row(1, 0, 1000, 1050, 3000);
    bad_hbm.hbm_done_ns = 1100;
    EXPECT_THROW(m.on_data_complete(bad_hbm, RtOutcome::l1_hit, probe(50), true, true), SimulationError);
    EXPECT_THROW(m.on_data_complete(row(2, 0, 1000, 1050, 3000), RtOutcome::l1_hit, probe(49), true, true),
                 SimulationError);
    EXPECT_NO_THROW(m.on_data_complete(row(3, 0, 1000, 1050, 3000), RtOutcome::l1_hit, probe(50), true, true));
}

TEST(Collector, StageFractionsPartitionTheRoundTrip) {
    MetricsCollector m(2, 150, false, 1);
    m.on_data_complete(row(0, 0, 1000, 1950, 3121, RtOutcome::walk_full), RtOutcome::walk_full, probe(950), true,
                       true);
    m.on_data_complete(row(1, 0, 1000, 1050, 2221), RtOutcome::l1_hit, probe(50), false, true);
    const auto s = m.summarize(0);
    double sum = 0;
    for (double f : s.stage_fractions) sum += f;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    EXPECT_NEAR(s.rt_fraction, (950.0 / 3121 + 50.0 / 2221) / 2, 1e-12);
    EXPECT_EQ(s.completion_ns, 3121u);
    EXPECT_EQ(s.total_requests, 2u);
    std::uint64_t outcomes = 0;
    for (auto c : s.outcome_counts) outcomes += c;
    EXPECT_EQ(outcomes, s.total_requests);
}

TEST(Collector, WalkOnlyCountedForItsPageRole) {
    MetricsCollector m(1, 150, false, 1);
    m.on_data_complete(row(0, 0, 1000, 1950, 3121, RtOutcome::walk_full), RtOutcome::walk_full, probe(950), true,
                       true);
    m.on_data_complete(row(1, 0, 1000, 1350, 2521, RtOutcome::walk_partial_4), RtOutcome::walk_partial_4,
                       probe(350), true, false);
    m.on_data_complete(row(2, 0, 1000, 1350, 2521, RtOutcome::walk_partial_4), RtOutcome::walk_partial_4,
                       probe(350), false, false);
    const auto s = m.summarize(0);
    EXPECT_EQ(s.first_page_full_walks, 1u);
    EXPECT_EQ(s.boundary_walks, 2u);
    EXPECT_EQ(s.boundary_full_walks, 0u);
    EXPECT_EQ(s.walks_on_non_first_request, 1u);
}

TEST(Collector, WorkingSetTracksBothDefinitions) {
    MetricsCollector m(1, 150, false, 1);
    m.stream_page_opened(0, 4);
    m.stream_page_opened(0, 4);
    m.stream_page_opened(0, 5);
    m.page_in_flight(0, 4);
    m.page_in_flight(0, 5);
    m.page_in_flight(0, 6);
    m.page_retired(0, 6);
    m.stream_page_closed(0, 4);
    m.stream_page_opened(0, 6);
    const auto s = m.summarize(0);
    EXPECT_EQ(s.peak_page_working_set, 3u);
    EXPECT_EQ(s.peak_inflight_pages, 3u);
    EXPECT_THROW(m.page_retired(0, 6), SimulationError);
    EXPECT_THROW(m.stream_page_closed(0, 9), SimulationError);
}

TEST(Collector, TraceSamplingKeepsEveryKth) {
    MetricsCollector m(1, 150, true, 3);
    for (std::uint64_t i = 0; i < 10; ++i)
        m.on_data_complete(row(i, 0, 1000, 1050, 3000), RtOutcome::l1_hit, probe(50), false, false);
    ASSERT_EQ(m.trace().size(), 4u);
    EXPECT_EQ(m.trace()[3].request_id, 9u);
    EXPECT_EQ(m.summarize(0).total_requests, 10u);
}

TEST(Overhead, IdealAgainstItselfIsOne) {
    SimConfig c;
    c.num_gpus = 4;
    c.mode = Mode::ideal;
    const auto s = simulate(c).summary;
    EXPECT_DOUBLE_EQ(overhead_vs_ideal(s, s), 1.0);
    EXPECT_DOUBLE_EQ(rt_fraction(s), 0.0);
}

TEST(Overhead, RefusesMismatchedPairs) {
    SimConfig c;
    c.num_gpus = 4;
    const auto real = simulate(c).summary;
    SimConfig other = c;
    other.mode = Mode::ideal;
    other.seed = 9;
    EXPECT_THROW(overhead_vs_ideal(real, simulate(other).summary), ConfigError);
    EXPECT_THROW(overhead_vs_ideal(real, real), ConfigError);
    other.seed = c.seed;
    other.output_dir = "elsewhere";
    EXPECT_GT(overhead_vs_ideal(real, simulate(other).summary), 1.0);
}

TEST(Breakdown, SingleRequestIsOneOutcome) {
    MetricsCollector m(1, 150, false, 1);
    m.on_data_complete(row(0, 0, 1000, 1150, 3000, RtOutcome::l2_hit), RtOutcome::l2_hit, probe(150), true, true);
    const auto b = outcome_breakdown(m.summarize(0));
    ASSERT_EQ(b.size(), 1u);
    EXPECT_DOUBLE_EQ(b.at("L2_HIT"), 1.0);
}

TEST(Breakdown, FullWalksPerDestinationEqualColdPages) {
    SimConfig c;
    c.trace_enabled = false;
    const auto s = simulate(c).summary;
    EXPECT_EQ(s.outcome(RtOutcome::walk_full), 16u);
    for (std::uint32_t d = 0; d < 16; ++d) {
        EXPECT_EQ(s.distinct_pages_per_destination[d], 1u);
        EXPECT_EQ(s.data_walks_per_destination[d], 1u);
        EXPECT_EQ(s.walks_per_destination[d], 1u);
    }
}

TEST(Emit, TraceHeaderIsTheContract) {
    const std::string text = csv({});
    EXPECT_EQ(text,
              "request_id,src,dst,station,page_index,issue_ns,net_arrive_ns,rt_start_ns,rt_end_ns,rt_outcome,"
              "mshr_stall_ns,walker_queue_ns,hbm_done_ns,ack_ns\n");
}

TEST(Emit, MicroRunHasEightRows) {
    SimConfig c;
    c.num_gpus = 2;
    c.collective_size = 2048;
    c.request_size = 256;
    const auto r = simulate(c);
    const std::string text = csv(r.trace);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::uint64_t expect = 0;
    while (std::getline(in, line)) EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(expect++));
    EXPECT_EQ(expect, 8u);
}

TEST(Emit, SummaryJsonKeysAndRoundTrip) {
    SimConfig c;
    c.num_gpus = 4;
    const auto s = simulate(c).summary;
    const json j = to_json(s);
    for (const char* key :
         {"completion_ns", "total_requests", "rt_latency_ns", "round_trip_ns", "outcome_counts", "hum_resolution",
          "round_trip_fractions", "rt_fraction", "peak_page_working_set", "peak_inflight_pages",
          "walks_per_destination", "seed", "config", "topology"})
        EXPECT_TRUE(j.contains(key)) << key;
    for (const char* key : {"mean", "median", "p99"}) EXPECT_TRUE(j["rt_latency_ns"].contains(key));
    for (const char* stage : {"forward", "translation", "hbm", "return"})
        EXPECT_TRUE(j["round_trip_fractions"].contains(stage));
    EXPECT_EQ(j["outcome_counts"].size(), 10u);
    const auto back = summary_from_json(j);
    EXPECT_EQ(back.completion_ns, s.completion_ns);
    EXPECT_EQ(back.outcome_counts, s.outcome_counts);
    EXPECT_EQ(back.config, s.config);
    EXPECT_EQ(j["topology"]["rails"], 16);
    EXPECT_EQ(j["topology"]["idle_forward_ns"], idle_forward_latency(c.fabric, c.request_size));
}

TEST(Emit, WritesFilesAndReportsPaths) {
    const auto dir = std::filesystem::temp_directory_path() / "rtsim_emit_test";
    std::filesystem::remove_all(dir);
    SimConfig c;
    c.num_gpus = 2;
    c.collective_size = 2048;
    c.request_size = 256;
    const auto r = simulate(c);
    emit(dir / "a" / "trace.csv", dir / "a" / "summary.json", r.summary, r.trace);
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / "trace.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "a" / "summary.json"));
    try {
        write_file(dir / "a" / "trace.csv" / "nested.csv", "x");
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("trace.csv"), std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
