#include "evgame/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "evgame/digest.hpp"
#include "evgame/errors.hpp"
#include "evgame/rng.hpp"
#include "json.hpp"

namespace evgame {

namespace {

// Absorbs float noise in e/(R*dt) so an exact multiple never rounds up.
constexpr double kSlotCountTol = 1e-9;

constexpr int kMaxRejectionDraws = 100000;

}  // namespace

int charge_slots(const EvSpec& ev, double slot_hours) {
    if (ev.max_rate_kw <= 0.0 || slot_hours <= 0.0) {
        throw ConfigError("charge_slots: non-positive rate or slot length");
    }
    double slots = ev.demand_kwh / (ev.max_rate_kw * slot_hours);
    int n = static_cast<int>(std::ceil(slots - kSlotCountTol));
    return std::max(n, 0);
}

double Aggregator::total_demand_kwh() const {
    double e = 0.0;
    for (const auto& ev : evs) e += ev.demand_kwh;
    return e;
}

double Aggregator::fleet_max_rate_kw() const {
    double r = 0.0;
    for (const auto& ev : evs) r += ev.max_rate_kw;
    return r;
}

double Aggregator::slot_energy_bound_kwh(double slot_hours) const {
    return fleet_max_rate_kw() * slot_hours / efficiency;
}

double Aggregator::grid_budget_kwh() const {
    return total_demand_kwh() / efficiency;
}

int Aggregator::latest_start(int horizon_slots) const {
    int latest = horizon_slots - min_slots + 1;
    return std::clamp(latest, 1, horizon_slots);
}

std::vector<int> Aggregator::start_slots(int horizon_slots) const {
    std::vector<int> slots;
    int latest = latest_start(horizon_slots);
    slots.reserve(latest);
    for (int s = 1; s <= latest; ++s) slots.push_back(s);
    return slots;
}

std::string Scenario::digest() const {
    DigestBuffer buf;
    buf.put_str("evgame-scenario-digest-v1");
    buf.put_str(schema_version);
    buf.put_str(rng_algorithm);
    buf.put_u64(seed);
    buf.put_u32(static_cast<std::uint32_t>(horizon_slots));
    buf.put_f64(slot_hours);
    buf.put_f64_vec(grid.base_load_kwh);
    buf.put_f64_vec(grid.phi);
    buf.put_f64_vec(grid.delta);
    buf.put_u32(static_cast<std::uint32_t>(aggregators.size()));
    for (const auto& agg : aggregators) {
        buf.put_u32(static_cast<std::uint32_t>(agg.id));
        buf.put_f64(agg.efficiency);
        buf.put_u32(static_cast<std::uint32_t>(agg.min_slots));
        buf.put_f64_vec(agg.deviation_weights);
        buf.put_u32(static_cast<std::uint32_t>(agg.evs.size()));
        for (const auto& ev : agg.evs) {
            buf.put_str(ev.model);
            buf.put_f64(ev.max_rate_kw);
            buf.put_f64(ev.capacity_kwh);
            buf.put_f64(ev.initial_soc_frac);
            buf.put_f64(ev.demand_kwh);
        }
    }
    return buf.hex();
}

GenerationConfig paper_default_config() {
    GenerationConfig cfg;
    cfg.horizon_slots = 16;
    cfg.slot_hours = 0.5;
    cfg.efficiency = 0.864;
    cfg.phi = 0.2;
    cfg.delta = 0.2;
    cfg.catalog = {
        {"Toyota Prius", 3.8, 4.4},
        {"Chevrolet Volt", 3.8, 16.0},
        {"Nissan Leaf", 3.3, 24.0},
    };
    // Fleet mix per aggregator (Prius, Volt, Leaf) and the fixed
    // start-slot set sizes the preset reproduces.
    cfg.aggregators = {
        {{2, 3, 5}, 12},
        {{2, 5, 3}, 10},
        {{3, 2, 5}, 7},
        {{3, 5, 2}, 9},
        {{5, 3, 2}, 6},
    };
    // Aggregate half-hourly demand of ~200 residences, 8 AM to 4 PM: the
    // post-breakfast trough climbing toward the evening-peak shoulder.
    cfg.base_load_kwh = {40.0, 40.5, 41.0, 41.5, 42.0, 42.8, 43.6, 44.6,
                         45.6, 46.8, 48.0, 49.5, 51.0, 53.0, 56.0, 60.0};
    return cfg;
}

namespace {

void check_config(const GenerationConfig& cfg) {
    if (cfg.horizon_slots < 1) throw ConfigError("config: horizon_slots must be >= 1");
    if (!(cfg.slot_hours > 0.0)) throw ConfigError("config: slot_hours must be positive");
    if (!(cfg.phi > 0.0) || !(cfg.delta > 0.0)) {
        throw ConfigError("config: tariff constants phi and delta must be positive");
    }
    if (!(cfg.efficiency > 0.0 && cfg.efficiency <= 1.0)) {
        throw ConfigError("config: efficiency must lie in (0,1]");
    }
    if (cfg.catalog.empty()) throw ConfigError("config: EV catalog is empty");
    for (const auto& entry : cfg.catalog) {
        if (!(entry.max_rate_kw > 0.0) || !(entry.capacity_kwh > 0.0)) {
            throw ConfigError("config: catalog entry with non-positive rate or capacity");
        }
    }
    if (cfg.aggregators.empty()) throw ConfigError("config: at least one aggregator required");
    for (const auto& spec : cfg.aggregators) {
        if (spec.ev_counts.size() != cfg.catalog.size()) {
            throw ConfigError("config: ev_counts size does not match catalog size");
        }
        int total = 0;
        for (int c : spec.ev_counts) {
            if (c < 0) throw ConfigError("config: negative EV count");
            total += c;
        }
        if (total == 0) throw ConfigError("config: aggregator with empty fleet");
        if (spec.pinned_min_slots && *spec.pinned_min_slots > cfg.horizon_slots) {
            throw ConfigError("config: pinned min_slots exceeds the horizon");
        }
    }
    if (static_cast<int>(cfg.base_load_kwh.size()) != cfg.horizon_slots) {
        throw ConfigError("config: base_load_kwh length does not match horizon_slots");
    }
    for (double v : cfg.base_load_kwh) {
        if (!(v > 0.0)) throw ConfigError("config: base load entries must be positive");
    }
    if (cfg.weight_min < 1 || cfg.weight_max < cfg.weight_min) {
        throw ConfigError("config: invalid deviation-weight range");
    }
}

}  // namespace

Scenario generate_instance(const GenerationConfig& cfg, std::uint64_t seed) {
    check_config(cfg);

    Scenario sc;
    sc.schema_version = kScenarioSchemaVersion;
    sc.rng_algorithm = SeededRng::kAlgorithm;
    sc.seed = seed;
    sc.horizon_slots = cfg.horizon_slots;
    sc.slot_hours = cfg.slot_hours;
    sc.grid.base_load_kwh = cfg.base_load_kwh;
    sc.grid.phi.assign(cfg.horizon_slots, cfg.phi);
    sc.grid.delta.assign(cfg.horizon_slots, cfg.delta);

    SeededRng rng(seed);
    for (std::size_t i = 0; i < cfg.aggregators.size(); ++i) {
        const auto& spec = cfg.aggregators[i];
        Aggregator agg;
        agg.id = static_cast<int>(i) + 1;
        agg.efficiency = cfg.efficiency;

        int min_slots = 0;
        for (int attempt = 0;; ++attempt) {
            if (attempt >= kMaxRejectionDraws) {
                throw ConfigError("generate_instance: could not realize pinned min_slots for aggregator " +
                                  std::to_string(agg.id));
            }
            agg.evs.clear();
            for (std::size_t c = 0; c < cfg.catalog.size(); ++c) {
                for (int k = 0; k < spec.ev_counts[c]; ++k) {
                    EvSpec ev;
                    ev.model = cfg.catalog[c].model;
                    ev.max_rate_kw = cfg.catalog[c].max_rate_kw;
                    ev.capacity_kwh = cfg.catalog[c].capacity_kwh;
                    ev.initial_soc_frac = rng.uniform01();
                    ev.demand_kwh = ev.capacity_kwh * (1.0 - ev.initial_soc_frac);
                    agg.evs.push_back(std::move(ev));
                }
            }
            min_slots = 0;
            for (const auto& ev : agg.evs) min_slots = std::max(min_slots, charge_slots(ev, cfg.slot_hours));
            if (!spec.pinned_min_slots || min_slots == *spec.pinned_min_slots) break;
        }
        agg.min_slots = min_slots;
        if (agg.min_slots > cfg.horizon_slots) {
            throw ConfigError("generate_instance: aggregator " + std::to_string(agg.id) +
                              " needs " + std::to_string(agg.min_slots) +
                              " slots but the horizon has only " + std::to_string(cfg.horizon_slots) +
                              " (no feasible start slot)");
        }
        double weight = static_cast<double>(rng.uniform_int(cfg.weight_min, cfg.weight_max));
        agg.deviation_weights.assign(cfg.horizon_slots, weight);
        sc.aggregators.push_back(std::move(agg));
    }
    return sc;
}

// ---- validation ----

namespace {

void check_positive_vec(const std::vector<double>& v, int expected_len, const std::string& loc,
                        bool strict, ValidationReport& report) {
    if (static_cast<int>(v.size()) != expected_len) {
        report.issues.push_back({loc, "vector length mismatch: expected " + std::to_string(expected_len) +
                                          ", got " + std::to_string(v.size())});
        return;
    }
    for (std::size_t t = 0; t < v.size(); ++t) {
        bool bad = strict ? !(v[t] > 0.0) : (v[t] < 0.0);
        if (bad) {
            report.issues.push_back({loc + "[" + std::to_string(t) + "]",
                                     strict ? "entry must be strictly positive" : "entry must be nonnegative"});
        }
    }
}

}  // namespace

ValidationReport validate(const Scenario& sc) {
    ValidationReport report;
    if (sc.schema_version != kScenarioSchemaVersion) {
        report.issues.push_back({"schema_version", "unsupported schema version '" + sc.schema_version + "'"});
    }
    if (sc.horizon_slots < 1) report.issues.push_back({"horizon_slots", "must be >= 1"});
    if (!(sc.slot_hours > 0.0)) report.issues.push_back({"slot_hours", "must be positive"});
    if (sc.aggregators.empty()) report.issues.push_back({"aggregators", "at least one aggregator required"});
    if (sc.horizon_slots < 1 || !(sc.slot_hours > 0.0)) return report;  // nothing below is meaningful

    const int T = sc.horizon_slots;
    check_positive_vec(sc.grid.base_load_kwh, T, "grid.base_load_kwh", true, report);
    check_positive_vec(sc.grid.phi, T, "grid.phi", true, report);
    check_positive_vec(sc.grid.delta, T, "grid.delta", true, report);

    for (std::size_t i = 0; i < sc.aggregators.size(); ++i) {
        const auto& agg = sc.aggregators[i];
        std::string loc = "aggregators[" + std::to_string(i) + "]";
        if (!(agg.efficiency > 0.0 && agg.efficiency <= 1.0)) {
            report.issues.push_back({loc + ".efficiency", "efficiency out of (0,1]"});
        }
        check_positive_vec(agg.deviation_weights, T, loc + ".deviation_weights", true, report);
        if (agg.evs.empty()) {
            report.issues.push_back({loc + ".evs", "empty fleet"});
        }
        int derived_min_slots = 0;
        for (std::size_t v = 0; v < agg.evs.size(); ++v) {
            const auto& ev = agg.evs[v];
            std::string evloc = loc + ".evs[" + std::to_string(v) + "]";
            if (!(ev.max_rate_kw > 0.0)) report.issues.push_back({evloc + ".max_rate_kw", "must be positive"});
            if (!(ev.capacity_kwh > 0.0)) report.issues.push_back({evloc + ".capacity_kwh", "must be positive"});
            if (!(ev.initial_soc_frac >= 0.0 && ev.initial_soc_frac <= 1.0)) {
                report.issues.push_back({evloc + ".initial_soc_frac", "must lie in [0,1]"});
            }
            double expected_demand = ev.capacity_kwh * (1.0 - ev.initial_soc_frac);
            if (std::abs(ev.demand_kwh - expected_demand) >
                1e-12 * std::max(1.0, std::abs(expected_demand))) {
                report.issues.push_back({evloc + ".demand_kwh",
                                         "demand must equal capacity * (1 - initial_soc_frac)"});
            }
            if (ev.demand_kwh < 0.0 || ev.demand_kwh > ev.capacity_kwh * (1.0 + 1e-12)) {
                report.issues.push_back({evloc + ".demand_kwh", "must lie in [0, capacity]"});
            }
            if (ev.max_rate_kw > 0.0) {
                derived_min_slots = std::max(derived_min_slots, charge_slots(ev, sc.slot_hours));
            }
        }
        if (agg.min_slots != derived_min_slots) {
            report.issues.push_back({loc + ".min_slots",
                                     "stored value " + std::to_string(agg.min_slots) +
                                         " does not match the fleet-derived value " +
                                         std::to_string(derived_min_slots)});
        }
        if (agg.min_slots > T) {
            report.issues.push_back({loc + ".min_slots", "exceeds the horizon; no feasible start slot"});
        }
    }
    return report;
}

// ---- JSON I/O ----

namespace {

using nlohmann::json;

json scenario_to_json(const Scenario& sc) {
    json j;
    j["schema_version"] = sc.schema_version;
    j["rng_algorithm"] = sc.rng_algorithm;
    j["seed"] = sc.seed;
    j["horizon_slots"] = sc.horizon_slots;
    j["slot_hours"] = sc.slot_hours;
    j["grid"] = {
        {"base_load_kwh", sc.grid.base_load_kwh},
        {"phi_cents_per_kwh2", sc.grid.phi},
        {"delta_cents_per_kwh", sc.grid.delta},
    };
    j["aggregators"] = json::array();
    for (const auto& agg : sc.aggregators) {
        json ja;
        ja["id"] = agg.id;
        ja["efficiency"] = agg.efficiency;
        ja["min_slots"] = agg.min_slots;
        ja["deviation_weights_cents_per_kwh2"] = agg.deviation_weights;
        ja["evs"] = json::array();
        for (const auto& ev : agg.evs) {
            ja["evs"].push_back({
                {"model", ev.model},
                {"max_rate_kw", ev.max_rate_kw},
                {"capacity_kwh", ev.capacity_kwh},
                {"initial_soc_frac", ev.initial_soc_frac},
                {"demand_kwh", ev.demand_kwh},
            });
        }
        j["aggregators"].push_back(std::move(ja));
    }
    return j;
}

Scenario scenario_from_json(const json& j) {
    Scenario sc;
    sc.schema_version = j.at("schema_version").get<std::string>();
    if (sc.schema_version != kScenarioSchemaVersion) {
        throw IoError("scenario: unsupported schema_version '" + sc.schema_version + "'");
    }
    sc.rng_algorithm = j.at("rng_algorithm").get<std::string>();
    sc.seed = j.at("seed").get<std::uint64_t>();
    sc.horizon_slots = j.at("horizon_slots").get<int>();
    sc.slot_hours = j.at("slot_hours").get<double>();
    const auto& jg = j.at("grid");
    sc.grid.base_load_kwh = jg.at("base_load_kwh").get<std::vector<double>>();
    sc.grid.phi = jg.at("phi_cents_per_kwh2").get<std::vector<double>>();
    sc.grid.delta = jg.at("delta_cents_per_kwh").get<std::vector<double>>();
    for (const auto& ja : j.at("aggregators")) {
        Aggregator agg;
        agg.id = ja.at("id").get<int>();
        agg.efficiency = ja.at("efficiency").get<double>();
        agg.min_slots = ja.at("min_slots").get<int>();
        agg.deviation_weights = ja.at("deviation_weights_cents_per_kwh2").get<std::vector<double>>();
        for (const auto& je : ja.at("evs")) {
            EvSpec ev;
            ev.model = je.at("model").get<std::string>();
            ev.max_rate_kw = je.at("max_rate_kw").get<double>();
            ev.capacity_kwh = je.at("capacity_kwh").get<double>();
            ev.initial_soc_frac = je.at("initial_soc_frac").get<double>();
            ev.demand_kwh = je.at("demand_kwh").get<double>();
            agg.evs.push_back(std::move(ev));
        }
        sc.aggregators.push_back(std::move(agg));
    }
    return sc;
}

}  // namespace

std::string scenario_to_json_text(const Scenario& sc) {
    return scenario_to_json(sc).dump(2) + "\n";
}

Scenario scenario_from_json_text(const std::string& text) {
    try {
        return scenario_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw IoError(std::string("scenario: malformed JSON: ") + e.what());
    }
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open scenario file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return scenario_from_json_text(ss.str());
}

void save_scenario(const Scenario& sc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write scenario file: " + path.string());
    out << scenario_to_json_text(sc);
    if (!out) throw IoError("failed while writing scenario file: " + path.string());
}

}  // namespace evgame
