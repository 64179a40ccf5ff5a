#pragma once

// Simulation configuration: defaults, JSON (de)serialization with one
// section per module, per-key overrides, and validation.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rtsim/address.hpp"
#include "rtsim/collective.hpp"
#include "rtsim/fabric.hpp"
#include "rtsim/translation.hpp"

namespace rtsim {

using json = nlohmann::json;

struct OptimConfig {
    bool pretranslate_enabled = false;
    SimTime pretranslate_lead_ns = 2000;
    bool prefetch_enabled = false;
    double prefetch_trigger_fraction = 0.5;
};

enum class Mode { real, ideal };

inline const char* to_string(Mode m) { return m == Mode::real ? "real" : "ideal"; }

struct SimConfig {
    // collective
    std::uint32_t num_gpus = 16;
    std::uint64_t collective_size = 1ull << 20;
    // 4 KiB stores with a 20-deep window (80 KiB in flight per stream).
    std::uint64_t request_size = 4096;
    std::uint32_t max_outstanding_per_wg = 20;
    // address_model
    std::uint64_t page_size = kDefaultPageSize;
    std::uint64_t buffer_base = 0;
    SpaMapping spa_mapping = SpaMapping::identity;
    // modules
    // Spread each source's destinations across distinct rails.
    FabricConfig fabric{.station_policy = StationPolicy::src_dst_mod};
    TlbConfig tlb;
    WalkConfig walk;
    OptimConfig optim;
    // metrics
    bool trace_enabled = true;
    std::uint64_t trace_sample_every = 1;
    // run
    Mode mode = Mode::real;
    std::uint64_t seed = 1;
    std::string output_dir = "rtsim_out";
    std::uint64_t max_events = 5'000'000'000ull;
};

// Parses "4096", "16KB", "1MiB", "4 GB". Units are binary.
inline std::uint64_t parse_size(const std::string& text) {
    std::size_t pos = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (pos == 0) throw ConfigError("not a size: '" + text + "'");
    std::uint64_t value = std::stoull(text.substr(0, pos));
    std::string unit;
    for (std::size_t i = pos; i < text.size(); ++i)
        if (!std::isspace(static_cast<unsigned char>(text[i])))
            unit += static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    std::uint64_t scale = 1;
    if (unit.empty() || unit == "B") scale = 1;
    else if (unit == "K" || unit == "KB" || unit == "KIB") scale = 1ull << 10;
    else if (unit == "M" || unit == "MB" || unit == "MIB") scale = 1ull << 20;
    else if (unit == "G" || unit == "GB" || unit == "GIB") scale = 1ull << 30;
    else throw ConfigError("unknown size unit in '" + text + "'");
    return value * scale;
}

inline std::string format_size(std::uint64_t bytes) {
    if (bytes >= (1ull << 30) && bytes % (1ull << 30) == 0) return std::to_string(bytes >> 30) + "GB";
    if (bytes >= (1ull << 20) && bytes % (1ull << 20) == 0) return std::to_string(bytes >> 20) + "MB";
    if (bytes >= (1ull << 10) && bytes % (1ull << 10) == 0) return std::to_string(bytes >> 10) + "KB";
    return std::to_string(bytes) + "B";
}

namespace detail {

struct Field {
    std::string section;
    std::string key;
    std::function<void(SimConfig&, const json&)> set;
    std::function<json(const SimConfig&)> get;

    std::string name() const { return section + "." + key; }
};

template <typename T>
T as(const json& v) {
    if constexpr (std::is_same_v<T, bool>) {
        if (v.is_boolean()) return v.get<bool>();
        if (v.is_string()) {
            auto s = v.get<std::string>();
            if (s == "true" || s == "1") return true;
            if (s == "false" || s == "0") return false;
        }
        throw ConfigError("expected a boolean");
    } else if constexpr (std::is_floating_point_v<T>) {
        if (v.is_number()) return v.get<T>();
        if (v.is_string()) return static_cast<T>(std::stod(v.get<std::string>()));
        throw ConfigError("expected a number");
    } else if constexpr (std::is_integral_v<T>) {
        if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
        if (v.is_number_integer()) {
            if (v.get<std::int64_t>() < 0) throw ConfigError("expected a non-negative integer");
            return static_cast<T>(v.get<std::int64_t>());
        }
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d)))
                throw ConfigError("expected a non-negative integer");
            return static_cast<T>(d);
        }
        if (v.is_string()) return static_cast<T>(parse_size(v.get<std::string>()));
        throw ConfigError("expected an integer");
    } else {
        if (v.is_string()) return v.get<std::string>();
        throw ConfigError("expected a string");
    }
}

#define RTSIM_FIELD(T, section, key, expr)                                               \
    detail::Field {                                                                      \
        section, key, [](SimConfig& c, const json& v) { c.expr = detail::as<T>(v); },    \
            [](const SimConfig& c) { return json(c.expr); }                              \
    }

}  // namespace detail

inline const std::vector<detail::Field>& config_fields() {
    using detail::Field;
    static const std::vector<Field> fields = {
        RTSIM_FIELD(std::uint32_t, "collective", "num_gpus", num_gpus),
        RTSIM_FIELD(std::uint64_t, "collective", "collective_size", collective_size),
        RTSIM_FIELD(std::uint64_t, "collective", "request_size", request_size),
        RTSIM_FIELD(std::uint32_t, "collective", "max_outstanding_per_wg", max_outstanding_per_wg),
        RTSIM_FIELD(std::uint64_t, "address_model", "page_size", page_size),
        RTSIM_FIELD(std::uint64_t, "address_model", "buffer_base", buffer_base),
        Field{"address_model", "spa_mapping",
              [](SimConfig& c, const json& v) {
                  const auto s = detail::as<std::string>(v);
                  if (s == "identity") c.spa_mapping = SpaMapping::identity;
                  else if (s == "permuted") c.spa_mapping = SpaMapping::permuted;
                  else throw ConfigError("expected 'identity' or 'permuted'");
              },
              [](const SimConfig& c) {
                  return json(c.spa_mapping == SpaMapping::identity ? "identity" : "permuted");
              }},
        RTSIM_FIELD(std::uint32_t, "fabric", "stations_per_gpu", fabric.stations_per_gpu),
        RTSIM_FIELD(std::uint32_t, "fabric", "lanes_per_station", fabric.lanes_per_station),
        RTSIM_FIELD(std::uint32_t, "fabric", "lanes_per_link", fabric.lanes_per_link),
        RTSIM_FIELD(std::uint64_t, "fabric", "lane_gbps", fabric.lane_gbps),
        RTSIM_FIELD(std::uint64_t, "fabric", "link_latency_ns", fabric.link_latency_ns),
        RTSIM_FIELD(std::uint64_t, "fabric", "switch_latency_ns", fabric.switch_latency_ns),
        RTSIM_FIELD(std::uint64_t, "fabric", "local_fabric_latency_ns", fabric.local_fabric_latency_ns),
        RTSIM_FIELD(std::uint64_t, "fabric", "hbm_latency_ns", fabric.hbm_latency_ns),
        RTSIM_FIELD(std::uint64_t, "fabric", "header_bytes", fabric.header_bytes),
        RTSIM_FIELD(std::uint64_t, "fabric", "ack_bytes", fabric.ack_bytes),
        RTSIM_FIELD(bool, "fabric", "unlimited_bandwidth", fabric.unlimited_bandwidth),
        Field{"fabric", "station_policy",
              [](SimConfig& c, const json& v) {
                  const auto s = detail::as<std::string>(v);
                  if (s == "dst_mod") c.fabric.station_policy = StationPolicy::dst_mod;
                  else if (s == "src_dst_mod") c.fabric.station_policy = StationPolicy::src_dst_mod;
                  else throw ConfigError("expected 'dst_mod' or 'src_dst_mod'");
              },
              [](const SimConfig& c) { return json(to_string(c.fabric.station_policy)); }},
        RTSIM_FIELD(std::uint32_t, "translation", "l1_entries", tlb.l1_entries),
        RTSIM_FIELD(std::uint64_t, "translation", "l1_hit_latency_ns", tlb.l1_hit_latency_ns),
        RTSIM_FIELD(std::uint32_t, "translation", "l1_mshr_entries", tlb.l1_mshr_entries),
        RTSIM_FIELD(std::uint32_t, "translation", "l2_entries", tlb.l2_entries),
        RTSIM_FIELD(std::uint32_t, "translation", "l2_associativity", tlb.l2_associativity),
        RTSIM_FIELD(std::uint64_t, "translation", "l2_hit_latency_ns", tlb.l2_hit_latency_ns),
        RTSIM_FIELD(std::uint32_t, "translation", "l2_mshr_entries", tlb.l2_mshr_entries),
        RTSIM_FIELD(std::uint32_t, "translation", "page_table_levels", walk.levels),
        RTSIM_FIELD(std::uint32_t, "translation", "bits_per_level", walk.bits_per_level),
        Field{"translation", "pwc_entries",
              [](SimConfig& c, const json& v) {
                  json arr = v;
                  if (v.is_string()) arr = json::parse(v.get<std::string>());
                  if (!arr.is_array()) throw ConfigError("expected an array of sizes");
                  c.walk.pwc_entries.clear();
                  for (const auto& e : arr) c.walk.pwc_entries.push_back(detail::as<std::uint32_t>(e));
              },
              [](const SimConfig& c) { return json(c.walk.pwc_entries); }},
        RTSIM_FIELD(std::uint32_t, "translation", "pwc_associativity", walk.pwc_associativity),
        RTSIM_FIELD(std::uint64_t, "translation", "pwc_latency_ns", walk.pwc_latency_ns),
        RTSIM_FIELD(std::uint32_t, "translation", "walkers", walk.walkers),
        RTSIM_FIELD(std::uint64_t, "translation", "walk_memory_access_ns", walk.memory_access_ns),
        RTSIM_FIELD(bool, "optim", "pretranslate_enabled", optim.pretranslate_enabled),
        RTSIM_FIELD(std::uint64_t, "optim", "pretranslate_lead_ns", optim.pretranslate_lead_ns),
        RTSIM_FIELD(bool, "optim", "prefetch_enabled", optim.prefetch_enabled),
        RTSIM_FIELD(double, "optim", "prefetch_trigger_fraction", optim.prefetch_trigger_fraction),
        RTSIM_FIELD(bool, "metrics", "trace_enabled", trace_enabled),
        RTSIM_FIELD(std::uint64_t, "metrics", "trace_sample_every", trace_sample_every),
        Field{"run", "mode",
              [](SimConfig& c, const json& v) {
                  const auto s = detail::as<std::string>(v);
                  if (s == "real") c.mode = Mode::real;
                  else if (s == "ideal") c.mode = Mode::ideal;
                  else throw ConfigError("expected 'real' or 'ideal'");
              },
              [](const SimConfig& c) { return json(to_string(c.mode)); }},
        RTSIM_FIELD(std::uint64_t, "run", "seed", seed),
        RTSIM_FIELD(std::string, "run", "output_dir", output_dir),
        RTSIM_FIELD(std::uint64_t, "run", "max_events", max_events),
    };
    return fields;
}

#undef RTSIM_FIELD

inline void set_field(SimConfig& cfg, const std::string& name, const json& value) {
    for (const auto& f : config_fields()) {
        if (f.name() != name) continue;
        try {
            f.set(cfg, value);
        } catch (const std::exception& e) {
            throw ConfigError(name + ": " + e.what());
        }
        return;
    }
    throw ConfigError("unknown config key '" + name + "'");
}

// Command-line style override: the value is read as JSON when it parses,
// otherwise as a bare string.
inline void set_field_text(SimConfig& cfg, const std::string& name, const std::string& text) {
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    set_field(cfg, name, value);
}

inline json to_json(const SimConfig& cfg) {
    json j = json::object();
    for (const auto& f : config_fields()) j[f.section][f.key] = f.get(cfg);
    return j;
}

// Overlays `j` onto `cfg`; unknown sections and keys are errors.
inline void merge_json(SimConfig& cfg, const json& j) {
    if (j.is_null()) return;
    if (!j.is_object()) throw ConfigError("config root must be an object");
    for (const auto& [section, body] : j.items()) {
        const auto& fields = config_fields();
        if (std::none_of(fields.begin(), fields.end(), [&](const auto& f) { return f.section == section; }))
            throw ConfigError("unknown config section '" + section + "'");
        if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
        for (const auto& [key, value] : body.items()) set_field(cfg, section + "." + key, value);
    }
}

inline SimConfig from_json(const json& j) {
    SimConfig cfg;
    merge_json(cfg, j);
    return cfg;
}

inline void validate(const SimConfig& c) {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(c.num_gpus >= 2, "collective.num_gpus: must be at least 2");
    require(c.request_size >= 64 && c.request_size <= 4096, "collective.request_size: must be within 64..4096 bytes");
    build_plan(c.num_gpus, c.collective_size, c.request_size, c.max_outstanding_per_wg);
    require(is_power_of_two(c.page_size), "address_model.page_size: must be a power of two");
    require(c.fabric.stations_per_gpu > 0, "fabric.stations_per_gpu: must be positive");
    require(c.fabric.lanes_per_link > 0 && c.fabric.lanes_per_station % c.fabric.lanes_per_link == 0,
            "fabric.lanes_per_link: must divide lanes_per_station");
    require(c.fabric.lane_gbps > 0, "fabric.lane_gbps: must be positive");
    require(c.fabric.ack_bytes > 0, "fabric.ack_bytes: must be positive");
    try {
        validate(c.tlb);
        validate(c.walk);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    require(c.optim.prefetch_trigger_fraction > 0.0 && c.optim.prefetch_trigger_fraction < 1.0,
            "optim.prefetch_trigger_fraction: must be in (0, 1)");
    require(c.trace_sample_every > 0, "metrics.trace_sample_every: must be positive");
    require(c.max_events > 0, "run.max_events: must be positive");
}

inline SimConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    json j = json::object();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
        try {
            j = json::parse(text, nullptr, true, true);
        } catch (const json::parse_error& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }
    SimConfig cfg = from_json(j);
    validate(cfg);
    return cfg;
}

inline CollectivePlan plan_for(const SimConfig& c) {
    return build_plan(c.num_gpus, c.collective_size, c.request_size, c.max_outstanding_per_wg);
}

}  // namespace rtsim
