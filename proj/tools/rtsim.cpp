// rtsim: command-line front end for the reverse-translation simulator.
//
// Exit codes: 0 success, 1 validation failure, 2 run failure.

#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "rtsim/runner.hpp"

namespace {

using namespace rtsim;

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRunFailed = 2;

// Every config key becomes a --section.key flag; values given on the
// command line override the config file.
struct ConfigOptions {
    std::string path;
    std::map<std::string, std::string> overrides;

    void attach(CLI::App& app) {
        app.add_option("-c,--config", path, "JSON config file (defaults apply to missing keys)");
        for (const auto& f : config_fields())
            app.add_option("--" + f.name(), overrides[f.name()], "Override " + f.name())->group("Config keys");
    }

    SimConfig resolve() const {
        SimConfig cfg;
        if (!path.empty()) cfg = load_config(path);
        for (const auto& [key, text] : overrides)
            if (!text.empty()) set_field_text(cfg, key, text);
        validate(cfg);
        return cfg;
    }
};

template <typename T>
std::vector<T> parse_list(const std::vector<std::string>& items, const char* what) {
    std::vector<T> out;
    for (const auto& item : items) {
        try {
            out.push_back(static_cast<T>(parse_size(item)));
        } catch (const ConfigError&) {
            throw ConfigError(std::string("sweep.") + what + ": bad value '" + item + "'");
        }
    }
    return out;
}

int run_command(const SimConfig& cfg, const std::string& out) {
    const auto dir = resolve_output(out.empty() ? cfg.output_dir : out);
    const auto result = simulate(cfg);
    write_run(dir, result);
    std::cout << "completion_ns " << result.summary.completion_ns << "\nrt_mean_ns "
              << format_double(result.summary.rt_latency.mean) << "\nrt_fraction "
              << format_double(result.summary.rt_fraction) << "\noutput " << dir.string() << "\n";
    return kExitOk;
}

int run_pair_command(const SimConfig& cfg, const std::string& out) {
    const auto dir = resolve_output(out.empty() ? cfg.output_dir : out);
    const auto pair = run_pair(cfg);
    write_pair(dir, pair);
    std::cout << "real_completion_ns " << pair.real.summary.completion_ns << "\nideal_completion_ns "
              << pair.ideal.summary.completion_ns << "\noverhead " << format_double(pair.overhead) << "\noutput "
              << dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reverse address translation simulator for All-to-All over a railed scale-up fabric"};
    app.require_subcommand(1);

    std::string out;
    ConfigOptions run_opts, pair_opts, sweep_opts, validate_opts;

    auto* run = app.add_subcommand("run", "Run one simulation and write trace.csv and summary.json");
    run_opts.attach(*run);
    run->add_option("-o,--output", out, "Output directory (default: run.output_dir)");

    auto* pair = app.add_subcommand("run-pair", "Run real and ideal modes and write a comparison record");
    pair_opts.attach(*pair);
    pair->add_option("-o,--output", out, "Output directory (default: run.output_dir)");

    std::vector<std::string> gpus, sizes, l2, optims{"none"};
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    auto* sweep = app.add_subcommand("sweep", "Run the cross product of GPU counts, sizes, L2 sizes and optimizations");
    sweep_opts.attach(*sweep);
    sweep->add_option("-o,--output", out, "Output directory (default: run.output_dir)");
    sweep->add_option("--gpus", gpus, "GPU counts")->delimiter(',');
    sweep->add_option("--sizes", sizes, "Collective sizes, e.g. 1MB,16MB")->delimiter(',');
    sweep->add_option("--l2", l2, "L2 TLB entry counts (default: config value)")->delimiter(',');
    sweep->add_option("--optim", optims, "none, pretranslate, prefetch, both")->delimiter(',');
    sweep->add_option("-j,--jobs", jobs, "Cells run concurrently");

    auto* check = app.add_subcommand("validate", "Validate a config and print it with defaults filled in");
    validate_opts.attach(*check);

    std::string sweep_dir, trace, plot_out;
    auto* plot = app.add_subcommand("plot-data", "Export tidy per-figure CSVs from a sweep directory");
    plot->add_option("sweep_dir", sweep_dir, "Directory written by 'sweep'")->required();
    plot->add_option("--trace", trace, "Trace CSV for the per-request figure");
    plot->add_option("-o,--output", plot_out, "Output directory (default: <sweep_dir>/plot_data)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    SimConfig cfg;
    std::optional<SweepSpec> spec;
    try {
        if (*run) cfg = run_opts.resolve();
        if (*pair) cfg = pair_opts.resolve();
        if (*check) {
            std::cout << to_json(validate_opts.resolve()).dump(2) << "\n";
            return kExitOk;
        }
        if (*sweep) {
            spec.emplace();
            spec->base = sweep_opts.resolve();
            spec->gpus = parse_list<std::uint32_t>(gpus, "gpus");
            spec->sizes = parse_list<std::uint64_t>(sizes, "sizes");
            spec->l2_entries = l2.empty() ? std::vector<std::uint32_t>{spec->base.tlb.l2_entries}
                                          : parse_list<std::uint32_t>(l2, "l2_entries");
            spec->optims.clear();
            for (const auto& o : optims) spec->optims.push_back(optim_from_string(o));
            expand(*spec);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    }

    try {
        if (*run) return run_command(cfg, out);
        if (*pair) return run_pair_command(cfg, out);
        if (*sweep) {
            const auto dir = resolve_output(out.empty() ? spec->base.output_dir : out);
            const auto rows = run_sweep(*spec, dir, jobs);
            write_file(dir / "sweep.csv", sweep_csv(rows));
            std::size_t failed = 0;
            for (const auto& r : rows)
                if (!r.ok) {
                    ++failed;
                    std::cerr << "cell " << r.cell.name() << " failed: " << r.error << "\n";
                }
            std::cout << rows.size() - failed << " of " << rows.size() << " cells ok\noutput " << dir.string()
                      << "\n";
            return failed == 0 ? kExitOk : kExitRunFailed;
        }
        if (*plot) {
            const fs::path dir = resolve_output(sweep_dir);
            const fs::path dest = plot_out.empty() ? dir / "plot_data" : resolve_output(plot_out);
            for (const auto& p : export_plot_data(dir, dest, trace)) std::cout << p.string() << "\n";
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kExitRunFailed;
    }
    return kExitOk;
}
