#pragma once

// Orchestration shared by the CLI and the tests: paired real/ideal runs,
// cross-product sweeps, and tidy per-figure CSV exports.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rtsim/simulation.hpp"

namespace rtsim {

namespace fs = std::filesystem;

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) return std::to_string(v);
    return std::string(buf, end);
}

// Relative output paths land under $RTSIM_OUTPUT_ROOT when it is set.
inline fs::path resolve_output(const fs::path& p) {
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv("RTSIM_OUTPUT_ROOT"); root && *root) return fs::path(root) / p;
    return p;
}

inline void write_run(const fs::path& dir, const RunResult& r) {
    emit(dir / "trace.csv", dir / "summary.json", r.summary, r.trace);
}

struct PairResult {
    RunResult real;
    RunResult ideal;
    double overhead = 1.0;
};

inline PairResult run_pair(SimConfig cfg) {
    PairResult p;
    cfg.mode = Mode::real;
    p.real = simulate(cfg);
    cfg.mode = Mode::ideal;
    p.ideal = simulate(cfg);
    p.overhead = overhead_vs_ideal(p.real.summary, p.ideal.summary);
    return p;
}

inline json comparison_json(const PairResult& p) {
    return json{
        {"overhead", p.overhead},
        {"real_completion_ns", p.real.summary.completion_ns},
        {"ideal_completion_ns", p.ideal.summary.completion_ns},
        {"real_rt_fraction", p.real.summary.rt_fraction},
        {"real_rt_mean_ns", p.real.summary.rt_latency.mean},
        {"config", comparable_config(p.real.summary.config)},
    };
}

inline void write_pair(const fs::path& dir, const PairResult& p) {
    write_run(dir / "real", p.real);
    write_run(dir / "ideal", p.ideal);
    write_file(dir / "comparison.json", comparison_json(p).dump(2) + "\n");
}

// ---- sweep ----------------------------------------------------------------

enum class OptimSet { none, pretranslate, prefetch, both };

inline const char* to_string(OptimSet o) {
    switch (o) {
    case OptimSet::pretranslate: return "pretranslate";
    case OptimSet::prefetch: return "prefetch";
    case OptimSet::both: return "both";
    case OptimSet::none: break;
    }
    return "none";
}

inline OptimSet optim_from_string(const std::string& s) {
    if (s == "none") return OptimSet::none;
    if (s == "pretranslate") return OptimSet::pretranslate;
    if (s == "prefetch") return OptimSet::prefetch;
    if (s == "both") return OptimSet::both;
    throw ConfigError("sweep.optim: expected none, pretranslate, prefetch or both, got '" + s + "'");
}

struct SweepSpec {
    SimConfig base;
    std::vector<std::uint32_t> gpus;
    std::vector<std::uint64_t> sizes;
    std::vector<std::uint32_t> l2_entries;
    std::vector<OptimSet> optims{OptimSet::none};
};

struct SweepCell {
    std::size_t index = 0;
    std::uint32_t num_gpus = 0;
    std::uint64_t collective_size = 0;
    std::uint32_t l2_entries = 0;
    OptimSet optim = OptimSet::none;
    SimConfig config;

    std::string name() const {
        return "g" + std::to_string(num_gpus) + "_s" + format_size(collective_size) + "_l2-" +
               std::to_string(l2_entries) + "_" + to_string(optim);
    }
};

struct SweepRow {
    SweepCell cell;
    bool ok = false;
    std::string error;
    RunSummary real;
    RunSummary ideal;
    double overhead = 0;
};

inline void apply(SimConfig& c, OptimSet o) {
    c.optim.pretranslate_enabled = o == OptimSet::pretranslate || o == OptimSet::both;
    c.optim.prefetch_enabled = o == OptimSet::prefetch || o == OptimSet::both;
}

// Cells in row-major order over (gpus, sizes, l2, optim). Per-cell config
// errors surface at run time so a bad cell does not abort the sweep.
inline std::vector<SweepCell> expand(const SweepSpec& spec) {
    if (spec.gpus.empty()) throw ConfigError("sweep.gpus: list is empty");
    if (spec.sizes.empty()) throw ConfigError("sweep.sizes: list is empty");
    if (spec.l2_entries.empty()) throw ConfigError("sweep.l2_entries: list is empty");
    if (spec.optims.empty()) throw ConfigError("sweep.optim: list is empty");
    std::vector<SweepCell> cells;
    for (auto g : spec.gpus)
        for (auto s : spec.sizes)
            for (auto l2 : spec.l2_entries)
                for (auto o : spec.optims) {
                    SweepCell c;
                    c.index = cells.size();
                    c.num_gpus = g;
                    c.collective_size = s;
                    c.l2_entries = l2;
                    c.optim = o;
                    c.config = spec.base;
                    c.config.num_gpus = g;
                    c.config.collective_size = s;
                    c.config.tlb.l2_entries = l2;
                    apply(c.config, o);
                    cells.push_back(std::move(c));
                }
    return cells;
}

// Runs every cell (in parallel when jobs > 1). When `out` is non-empty each
// cell writes its pair under out/<cell name>/.
inline std::vector<SweepRow> run_sweep(const SweepSpec& spec, const fs::path& out = {}, unsigned jobs = 1) {
    const auto cells = expand(spec);
    std::vector<SweepRow> rows(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            SweepRow& row = rows[i];
            row.cell = cells[i];
            try {
                auto pair = run_pair(cells[i].config);
                if (!out.empty()) write_pair(out / cells[i].name(), pair);
                row.real = std::move(pair.real.summary);
                row.ideal = std::move(pair.ideal.summary);
                row.overhead = pair.overhead;
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));
    std::vector<std::thread> pool;
    for (unsigned j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return rows;
}

inline constexpr std::array<const char*, 16> kSweepColumns = {
    "cell",           "num_gpus",          "collective_size_bytes", "l2_entries",   "optim",
    "status",         "real_completion_ns", "ideal_completion_ns",  "overhead",     "rt_mean_ns",
    "rt_median_ns",   "rt_p99_ns",         "rt_fraction",           "total_requests", "walks",
    "error",
};

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < kSweepColumns.size(); ++i) os << (i ? "," : "") << kSweepColumns[i];
    os << '\n';
    for (const auto& r : rows) {
        const auto& c = r.cell;
        os << c.name() << ',' << c.num_gpus << ',' << c.collective_size << ',' << c.l2_entries << ','
           << to_string(c.optim) << ',' << (r.ok ? "ok" : "failed") << ',';
        if (r.ok) {
            std::uint64_t walks = 0;
            for (auto w : r.real.walks_per_destination) walks += w;
            os << r.real.completion_ns << ',' << r.ideal.completion_ns << ',' << format_double(r.overhead) << ','
               << format_double(r.real.rt_latency.mean) << ',' << r.real.rt_latency.median << ','
               << r.real.rt_latency.p99 << ',' << format_double(r.real.rt_fraction) << ','
               << r.real.total_requests << ',' << walks << ',';
        } else {
            os << ",,,,,,,,,";
        }
        os << csv_escape(r.error) << '\n';
    }
    return os.str();
}

// ---- plot data ------------------------------------------------------------

// Minimal CSV reader for the files this tool writes (quoted fields allowed).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError("csv: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
            else if (c == '"') quoted = false;
            else cur += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline CsvTable read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
    t.header = split_csv_line(line);
    while (std::getline(in, line))
        if (!line.empty()) t.rows.push_back(split_csv_line(line));
    return t;
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");
    return json::parse(in);
}

// Writes one tidy CSV per figure analog from a sweep directory (sweep.csv
// plus per-cell summaries) and, optionally, a run's trace. Values are copied
// from the inputs, never recomputed. Returns the files written.
inline std::vector<fs::path> export_plot_data(const fs::path& sweep_dir, const fs::path& out,
                                              const fs::path& trace = {}) {
    const CsvTable sweep = read_csv(sweep_dir / "sweep.csv");
    const auto c_cell = sweep.column("cell"), c_g = sweep.column("num_gpus"),
               c_s = sweep.column("collective_size_bytes"), c_l2 = sweep.column("l2_entries"),
               c_o = sweep.column("optim"), c_status = sweep.column("status"),
               c_ovh = sweep.column("overhead"), c_rt = sweep.column("rt_mean_ns"),
               c_comp = sweep.column("real_completion_ns");
    const std::string key_header = "num_gpus,collective_size_bytes,l2_entries,optim";

    std::ostringstream overhead, avg_rt, roundtrip, outcomes, tlb;
    overhead << key_header << ",overhead\n";
    avg_rt << key_header << ",rt_mean_ns\n";
    roundtrip << key_header << ",stage,fraction\n";
    outcomes << key_header << ",outcome,resolved_by,fraction\n";
    tlb << key_header << ",real_completion_ns,overhead\n";
    for (const auto& row : sweep.rows) {
        if (row.at(c_status) != "ok") continue;
        const std::string key = row.at(c_g) + "," + row.at(c_s) + "," + row.at(c_l2) + "," + row.at(c_o);
        overhead << key << ',' << row.at(c_ovh) << '\n';
        avg_rt << key << ',' << row.at(c_rt) << '\n';
        tlb << key << ',' << row.at(c_comp) << ',' << row.at(c_ovh) << '\n';
        const json s = read_json(sweep_dir / row.at(c_cell) / "real" / "summary.json");
        for (const char* stage : kStageNames)
            roundtrip << key << ',' << stage << ',' << format_double(s.at("round_trip_fractions").at(stage).get<double>())
                      << '\n';
        const double total = s.at("total_requests").get<double>();
        for (const auto& [name, count] : s.at("outcome_counts").items()) {
            if (total == 0) break;
            if (name == "L1_MSHR_HUM") {
                for (const auto& [by, n] : s.at("hum_resolution").items())
                    if (n.get<std::uint64_t>() != 0)
                        outcomes << key << ',' << name << ',' << by << ',' << format_double(n.get<double>() / total)
                                 << '\n';
            } else if (count.get<std::uint64_t>() != 0) {
                outcomes << key << ',' << name << ",," << format_double(count.get<double>() / total) << '\n';
            }
        }
    }
    std::vector<fs::path> written;
    auto put = [&](const char* name, const std::string& body) {
        write_file(out / name, body);
        written.push_back(out / name);
    };
    put("fig_overhead.csv", overhead.str());
    put("fig_avg_rt.csv", avg_rt.str());
    put("fig_roundtrip_stack.csv", roundtrip.str());
    put("fig_outcome_stack.csv", outcomes.str());
    put("fig_tlb_sweep.csv", tlb.str());

    if (!trace.empty()) {
        const CsvTable t = read_csv(trace);
        const auto id = t.column("request_id"), dst = t.column("dst"), page = t.column("page_index"),
                   issue = t.column("issue_ns"), start = t.column("rt_start_ns"), end = t.column("rt_end_ns"),
                   outcome = t.column("rt_outcome");
        std::ostringstream pr;
        pr << "request_id,dst,page_index,issue_ns,rt_ns,rt_outcome\n";
        for (const auto& r : t.rows) {
            if (r.at(outcome) == "PREFETCH") continue;
            const auto rt = std::stoull(r.at(end)) - std::stoull(r.at(start));
            pr << r.at(id) << ',' << r.at(dst) << ',' << r.at(page) << ',' << r.at(issue) << ',' << rt << ','
               << r.at(outcome) << '\n';
        }
        put("fig_per_request.csv", pr.str());
    }
    return written;
}

}  // namespace rtsim
