#pragma once

// Per-request trace rows, online aggregation into a run summary, derived
// metrics, and the CSV/JSON output contracts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtsim/config.hpp"
#include "rtsim/engine.hpp"
#include "rtsim/translation.hpp"

namespace rtsim {

struct TraceRow {
    std::uint64_t request_id = 0;
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint32_t station = 0;
    std::uint64_t page_index = 0;
    SimTime issue_ns = 0;
    SimTime net_arrive_ns = 0;
    SimTime rt_start_ns = 0;
    SimTime rt_end_ns = 0;
    RtOutcome rt_outcome = RtOutcome::l1_hit;
    SimTime mshr_stall_ns = 0;
    SimTime walker_queue_ns = 0;
    SimTime hbm_done_ns = 0;
    SimTime ack_ns = 0;
};

inline constexpr std::array<const char*, 14> kTraceColumns = {
    "request_id", "src",         "dst",           "station",         "page_index",
    "issue_ns",   "net_arrive_ns", "rt_start_ns", "rt_end_ns",       "rt_outcome",
    "mshr_stall_ns", "walker_queue_ns", "hbm_done_ns", "ack_ns",
};

// Round-trip stages of one data request; they partition ack - issue.
enum class Stage : std::uint8_t { forward, translation, hbm, ret };
inline constexpr std::array<const char*, 4> kStageNames = {"forward", "translation", "hbm", "return"};

struct LatencyStats {
    double mean = 0;
    SimTime median = 0;
    SimTime p99 = 0;
    SimTime max = 0;
};

struct RunSummary {
    SimTime completion_ns = 0;
    SimTime data_start_ns = 0;
    std::uint64_t total_requests = 0;
    std::uint64_t prefetch_requests = 0;
    LatencyStats rt_latency;
    LatencyStats round_trip;
    std::array<std::uint64_t, kOutcomeCount> outcome_counts{};
    // For L1_MSHR_HUM requests, how the merged-into miss was resolved.
    std::array<std::uint64_t, kOutcomeCount> hum_resolution{};
    std::array<double, 4> stage_fractions{};
    double rt_fraction = 0;
    // Distinct pages that are some stream's current write page, per destination.
    std::uint32_t peak_page_working_set = 0;
    std::vector<std::uint32_t> peak_page_working_set_per_gpu;
    // Distinct pages with at least one request between issue and ack.
    std::uint32_t peak_inflight_pages = 0;
    std::vector<std::uint32_t> peak_inflight_pages_per_gpu;
    std::vector<std::uint64_t> walks_per_destination;
    std::vector<std::uint64_t> data_walks_per_destination;
    std::vector<std::uint64_t> distinct_pages_per_destination;
    std::uint64_t walks_on_non_first_request = 0;
    std::uint64_t first_page_full_walks = 0;
    std::uint64_t boundary_walks = 0;
    std::uint64_t boundary_full_walks = 0;
    std::uint64_t mshr_stall_ns_total = 0;
    std::uint64_t walker_queue_ns_total = 0;
    std::uint64_t events = 0;
    std::uint64_t seed = 0;
    json config;
    json topology;

    std::uint64_t outcome(RtOutcome o) const { return outcome_counts[static_cast<std::size_t>(o)]; }
    std::uint64_t walk_requests() const {
        std::uint64_t n = 0;
        for (std::size_t i = 0; i < kOutcomeCount; ++i)
            if (is_walk(static_cast<RtOutcome>(i))) n += outcome_counts[i];
        return n;
    }
};

// Exact order statistics over integer samples via a sparse histogram.
class Histogram {
public:
    void add(SimTime v) {
        ++counts_[v];
        ++n_;
        sum_ += static_cast<long double>(v);
    }
    std::uint64_t count() const { return n_; }

    LatencyStats stats() const {
        LatencyStats s;
        if (n_ == 0) return s;
        s.mean = static_cast<double>(sum_ / n_);
        s.median = quantile(0.5);
        s.p99 = quantile(0.99);
        s.max = counts_.rbegin()->first;
        return s;
    }

    // Nearest-rank quantile.
    SimTime quantile(double q) const {
        const auto rank = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(n_)));
        std::uint64_t seen = 0;
        for (const auto& [v, c] : counts_) {
            seen += c;
            if (seen >= std::max<std::uint64_t>(rank, 1)) return v;
        }
        return counts_.rbegin()->first;
    }

private:
    std::map<SimTime, std::uint64_t> counts_;
    std::uint64_t n_ = 0;
    long double sum_ = 0;
};

// Online aggregation; fed by the simulation as requests complete.
class MetricsCollector {
public:
    MetricsCollector(std::uint32_t num_gpus, SimTime hbm_latency, bool keep_trace, std::uint64_t sample_every)
        : hbm_latency_(hbm_latency),
          keep_trace_(keep_trace),
          sample_every_(sample_every),
          walks_(num_gpus, 0),
          data_walks_(num_gpus, 0),
          inflight_pages_(num_gpus),
          peak_inflight_(num_gpus, 0),
          active_pages_(num_gpus),
          peak_ws_(num_gpus, 0),
          distinct_pages_(num_gpus) {}

    // Request `page` at `dst` became in flight (issue) or retired (ack).
    void page_in_flight(std::uint32_t dst, std::uint64_t page) {
        auto& m = inflight_pages_[dst];
        ++m[page];
        distinct_pages_[dst].insert(page);
        peak_inflight_[dst] = std::max(peak_inflight_[dst], static_cast<std::uint32_t>(m.size()));
    }
    void page_retired(std::uint32_t dst, std::uint64_t page) { release(inflight_pages_[dst], page); }

    // A stream moved its write cursor onto `page` (opened) or finished with it (closed).
    void stream_page_opened(std::uint32_t dst, std::uint64_t page) {
        auto& m = active_pages_[dst];
        ++m[page];
        peak_ws_[dst] = std::max(peak_ws_[dst], static_cast<std::uint32_t>(m.size()));
    }
    void stream_page_closed(std::uint32_t dst, std::uint64_t page) { release(active_pages_[dst], page); }

    // `first_of_page`: first request of its stream into this page.
    // `chunk_first_page`: the page holds the start of the stream's chunk.
    void on_data_complete(const TraceRow& row, RtOutcome resolved_by, const RtBreakdown& b, bool first_of_page,
                          bool chunk_first_page) {
        check_row(row, b);
        ++total_;
        ++outcomes_[static_cast<std::size_t>(row.rt_outcome)];
        if (row.rt_outcome == RtOutcome::l1_mshr_hum) ++hum_resolution_[static_cast<std::size_t>(resolved_by)];
        const SimTime rt = row.rt_end_ns - row.rt_start_ns;
        const SimTime round = row.ack_ns - row.issue_ns;
        rt_hist_.add(rt);
        rtt_hist_.add(round);
        const double inv = round == 0 ? 0.0 : 1.0 / static_cast<double>(round);
        stage_sums_[0] += static_cast<double>(row.net_arrive_ns - row.issue_ns) * inv;
        stage_sums_[1] += static_cast<double>(rt) * inv;
        stage_sums_[2] += static_cast<double>(row.hbm_done_ns - row.rt_end_ns) * inv;
        stage_sums_[3] += static_cast<double>(row.ack_ns - row.hbm_done_ns) * inv;
        mshr_stall_total_ += b.mshr_stall_ns;
        walker_queue_total_ += b.walker_queue_ns;
        if (row.ack_ns > last_ack_) last_ack_ = row.ack_ns;
        if (is_walk(row.rt_outcome)) {
            ++data_walks_[row.dst];
            if (!first_of_page) ++walks_on_non_first_;
            if (chunk_first_page) {
                if (row.rt_outcome == RtOutcome::walk_full) ++first_page_full_walks_;
            } else {
                ++boundary_walks_;
                if (row.rt_outcome == RtOutcome::walk_full) ++boundary_full_walks_;
            }
        }
        keep(row);
    }

    void on_prefetch_complete(const TraceRow& row) {
        ++prefetches_;
        keep(row);
    }

    void set_walks(std::uint32_t gpu, std::uint64_t walks) { walks_[gpu] = walks; }

    SimTime last_ack() const { return last_ack_; }
    std::uint64_t total() const { return total_; }
    const std::vector<TraceRow>& trace() const { return trace_; }

    RunSummary summarize(SimTime data_start) const {
        RunSummary s;
        s.data_start_ns = data_start;
        s.completion_ns = total_ == 0 ? 0 : last_ack_ - data_start;
        s.total_requests = total_;
        s.prefetch_requests = prefetches_;
        s.rt_latency = rt_hist_.stats();
        s.round_trip = rtt_hist_.stats();
        s.outcome_counts = outcomes_;
        s.hum_resolution = hum_resolution_;
        if (total_ > 0) {
            double sum = 0;
            for (std::size_t i = 0; i < 4; ++i) sum += stage_sums_[i];
            for (std::size_t i = 0; i < 4; ++i) s.stage_fractions[i] = stage_sums_[i] / sum;
            s.rt_fraction = s.stage_fractions[1];
        }
        s.peak_page_working_set_per_gpu = peak_ws_;
        s.peak_page_working_set = peak_ws_.empty() ? 0 : *std::max_element(peak_ws_.begin(), peak_ws_.end());
        s.peak_inflight_pages_per_gpu = peak_inflight_;
        s.peak_inflight_pages =
            peak_inflight_.empty() ? 0 : *std::max_element(peak_inflight_.begin(), peak_inflight_.end());
        s.walks_per_destination = walks_;
        s.data_walks_per_destination = data_walks_;
        for (const auto& d : distinct_pages_) s.distinct_pages_per_destination.push_back(d.size());
        s.walks_on_non_first_request = walks_on_non_first_;
        s.first_page_full_walks = first_page_full_walks_;
        s.boundary_walks = boundary_walks_;
        s.boundary_full_walks = boundary_full_walks_;
        s.mshr_stall_ns_total = mshr_stall_total_;
        s.walker_queue_ns_total = walker_queue_total_;
        return s;
    }

private:
    static void release(std::map<std::uint64_t, std::uint32_t>& m, std::uint64_t page) {
        auto it = m.find(page);
        if (it == m.end()) throw SimulationError("released page " + std::to_string(page) + " that was not held");
        if (--it->second == 0) m.erase(it);
    }

    void check_row(const TraceRow& r, const RtBreakdown& b) const {
        const bool ordered = r.issue_ns <= r.net_arrive_ns && r.net_arrive_ns <= r.rt_start_ns &&
                             r.rt_start_ns <= r.rt_end_ns && r.rt_end_ns <= r.hbm_done_ns && r.hbm_done_ns <= r.ack_ns;
        if (!ordered) throw SimulationError("request " + std::to_string(r.request_id) + ": timestamps out of order");
        if (r.rt_outcome != RtOutcome::ideal && b.total() != r.rt_end_ns - r.rt_start_ns)
            throw SimulationError("request " + std::to_string(r.request_id) + ": translation latency mismatch");
        if (r.hbm_done_ns - r.rt_end_ns != hbm_latency_)
            throw SimulationError("request " + std::to_string(r.request_id) + ": HBM stage mismatch");
    }

    void keep(const TraceRow& row) {
        if (keep_trace_ && row.request_id % sample_every_ == 0) trace_.push_back(row);
    }

    SimTime hbm_latency_;
    bool keep_trace_;
    std::uint64_t sample_every_;
    std::uint64_t total_ = 0;
    std::uint64_t prefetches_ = 0;
    std::array<std::uint64_t, kOutcomeCount> outcomes_{};
    std::array<std::uint64_t, kOutcomeCount> hum_resolution_{};
    Histogram rt_hist_;
    Histogram rtt_hist_;
    std::array<double, 4> stage_sums_{};
    std::uint64_t mshr_stall_total_ = 0;
    std::uint64_t walker_queue_total_ = 0;
    SimTime last_ack_ = 0;
    std::vector<std::uint64_t> walks_;
    std::vector<std::uint64_t> data_walks_;
    std::vector<std::map<std::uint64_t, std::uint32_t>> inflight_pages_;
    std::vector<std::uint32_t> peak_inflight_;
    std::vector<std::map<std::uint64_t, std::uint32_t>> active_pages_;
    std::vector<std::uint32_t> peak_ws_;
    std::vector<std::set<std::uint64_t>> distinct_pages_;
    std::uint64_t walks_on_non_first_ = 0;
    std::uint64_t first_page_full_walks_ = 0;
    std::uint64_t boundary_walks_ = 0;
    std::uint64_t boundary_full_walks_ = 0;
    std::vector<TraceRow> trace_;
};

// ---- derived metrics ------------------------------------------------------

inline double rt_fraction(const RunSummary& s) { return s.rt_fraction; }

// Fraction of data requests per outcome; zero-count outcomes are omitted.
inline std::map<std::string, double> outcome_breakdown(const RunSummary& s) {
    std::map<std::string, double> out;
    if (s.total_requests == 0) return out;
    for (std::size_t i = 0; i < kOutcomeCount; ++i)
        if (s.outcome_counts[i] != 0)
            out[std::string(kOutcomeNames[i])] =
                static_cast<double>(s.outcome_counts[i]) / static_cast<double>(s.total_requests);
    return out;
}

// Config keys allowed to differ between the two sides of a real/ideal pair.
inline json comparable_config(json cfg) {
    cfg["run"].erase("mode");
    cfg["run"].erase("output_dir");
    return cfg;
}

inline double overhead_vs_ideal(const RunSummary& real, const RunSummary& ideal) {
    if (comparable_config(real.config) != comparable_config(ideal.config))
        throw ConfigError("overhead_vs_ideal: runs differ in configuration beyond the translation mode");
    if (ideal.config.contains("run") && ideal.config["run"].value("mode", "ideal") != "ideal")
        throw ConfigError("overhead_vs_ideal: baseline run is not in ideal mode");
    if (ideal.completion_ns == 0) return real.completion_ns == 0 ? 1.0 : 0.0;
    return static_cast<double>(real.completion_ns) / static_cast<double>(ideal.completion_ns);
}

// ---- output contracts -----------------------------------------------------

inline json latency_json(const LatencyStats& s) {
    return json{{"mean", s.mean}, {"median", s.median}, {"p99", s.p99}, {"max", s.max}};
}

inline json to_json(const RunSummary& s) {
    json outcomes = json::object();
    json hum = json::object();
    for (std::size_t i = 0; i < kOutcomeCount; ++i) {
        const auto o = static_cast<RtOutcome>(i);
        if (o == RtOutcome::prefetch) continue;
        outcomes[std::string(kOutcomeNames[i])] = s.outcome_counts[i];
        if (o != RtOutcome::l1_mshr_hum && o != RtOutcome::l1_hit && o != RtOutcome::ideal)
            hum[std::string(kOutcomeNames[i])] = s.hum_resolution[i];
    }
    json stages = json::object();
    for (std::size_t i = 0; i < 4; ++i) stages[kStageNames[i]] = s.stage_fractions[i];
    return json{
        {"completion_ns", s.completion_ns},
        {"data_start_ns", s.data_start_ns},
        {"total_requests", s.total_requests},
        {"prefetch_requests", s.prefetch_requests},
        {"rt_latency_ns", latency_json(s.rt_latency)},
        {"round_trip_ns", latency_json(s.round_trip)},
        {"outcome_counts", outcomes},
        {"hum_resolution", hum},
        {"round_trip_fractions", stages},
        {"rt_fraction", s.rt_fraction},
        {"peak_page_working_set", s.peak_page_working_set},
        {"peak_page_working_set_per_gpu", s.peak_page_working_set_per_gpu},
        {"peak_inflight_pages", s.peak_inflight_pages},
        {"peak_inflight_pages_per_gpu", s.peak_inflight_pages_per_gpu},
        {"walks_per_destination", s.walks_per_destination},
        {"data_walks_per_destination", s.data_walks_per_destination},
        {"distinct_pages_per_destination", s.distinct_pages_per_destination},
        {"walks_on_non_first_request", s.walks_on_non_first_request},
        {"first_page_full_walks", s.first_page_full_walks},
        {"boundary_walks", s.boundary_walks},
        {"boundary_full_walks", s.boundary_full_walks},
        {"mshr_stall_ns_total", s.mshr_stall_ns_total},
        {"walker_queue_ns_total", s.walker_queue_ns_total},
        {"events", s.events},
        {"seed", s.seed},
        {"config", s.config},
        {"topology", s.topology},
    };
}

inline RunSummary summary_from_json(const json& j) {
    RunSummary s;
    s.completion_ns = j.at("completion_ns").get<SimTime>();
    s.data_start_ns = j.value("data_start_ns", SimTime{0});
    s.total_requests = j.at("total_requests").get<std::uint64_t>();
    s.prefetch_requests = j.value("prefetch_requests", std::uint64_t{0});
    for (const auto& [name, count] : j.at("outcome_counts").items())
        if (auto o = outcome_from_string(name)) s.outcome_counts[static_cast<std::size_t>(*o)] = count.get<std::uint64_t>();
    s.rt_fraction = j.value("rt_fraction", 0.0);
    s.peak_page_working_set = j.value("peak_page_working_set", 0u);
    s.peak_inflight_pages = j.value("peak_inflight_pages", 0u);
    s.seed = j.value("seed", std::uint64_t{0});
    s.config = j.value("config", json::object());
    return s;
}

inline void write_trace_csv(std::ostream& os, std::vector<TraceRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const TraceRow& a, const TraceRow& b) { return a.request_id < b.request_id; });
    for (std::size_t i = 0; i < kTraceColumns.size(); ++i) os << (i ? "," : "") << kTraceColumns[i];
    os << '\n';
    for (const auto& r : rows) {
        os << r.request_id << ',' << r.src << ',' << r.dst << ',' << r.station << ',' << r.page_index << ','
           << r.issue_ns << ',' << r.net_arrive_ns << ',' << r.rt_start_ns << ',' << r.rt_end_ns << ','
           << to_string(r.rt_outcome) << ',' << r.mshr_stall_ns << ',' << r.walker_queue_ns << ','
           << r.hbm_done_ns << ',' << r.ack_ns << '\n';
    }
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw std::runtime_error(path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    out << content;
    out.close();
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

inline std::string summary_text(const RunSummary& s) { return to_json(s).dump(2) + "\n"; }

inline void emit(const std::filesystem::path& trace_path, const std::filesystem::path& summary_path,
                 const RunSummary& summary, const std::vector<TraceRow>& rows) {
    std::ostringstream csv;
    write_trace_csv(csv, rows);
    write_file(trace_path, csv.str());
    write_file(summary_path, summary_text(summary));
}

}  // namespace rtsim
