#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace evgame {

inline constexpr const char* kScenarioSchemaVersion = "evgame-scenario-v1";

// One EV: battery-side quantities. demand_kwh = capacity * (1 - initial_soc)
// is the energy the battery still needs by the end of the horizon.
struct EvSpec {
    std::string model;
    double max_rate_kw = 0.0;
    double capacity_kwh = 0.0;
    double initial_soc_frac = 0.0;
    double demand_kwh = 0.0;
};

/// Minimum slot count to fill one EV at its maximum battery-side rate.
int charge_slots(const EvSpec& ev, double slot_hours);

struct Aggregator {
    int id = 0;
    double efficiency = 1.0;                 // grid kWh -> battery kWh factor
    std::vector<EvSpec> evs;
    std::vector<double> deviation_weights;   // per slot, currency/kWh^2
    int min_slots = 0;                       // max over EVs of charge_slots

    double total_demand_kwh() const;         // battery-side fleet demand
    double fleet_max_rate_kw() const;
    /// Grid-side per-slot upper bound on energy drawn (box constraint).
    double slot_energy_bound_kwh(double slot_hours) const;
    /// Grid-side energy budget the fleet must receive over its window.
    double grid_budget_kwh() const;
    /// Latest admissible start slot (1-based), clamped to [1, T].
    int latest_start(int horizon_slots) const;
    /// Admissible start slots {1, ..., latest_start}.
    std::vector<int> start_slots(int horizon_slots) const;
};

struct GridModel {
    std::vector<double> base_load_kwh;       // per slot, > 0
    std::vector<double> phi;                 // currency/kWh^2, > 0
    std::vector<double> delta;               // currency/kWh, > 0
};

struct Scenario {
    std::string schema_version = kScenarioSchemaVersion;
    std::string rng_algorithm;
    std::uint64_t seed = 0;
    int horizon_slots = 0;
    double slot_hours = 0.0;
    GridModel grid;
    std::vector<Aggregator> aggregators;

    int num_aggregators() const { return static_cast<int>(aggregators.size()); }
    /// Content hash over the canonical binary serialization (SHA-256 hex).
    std::string digest() const;
};

// ---- generation ----

struct EvCatalogEntry {
    std::string model;
    double max_rate_kw = 0.0;
    double capacity_kwh = 0.0;
};

struct AggregatorSpec {
    std::vector<int> ev_counts;              // one count per catalog entry
    // When set, SOC draws are redrawn until the fleet's min_slots equals
    // this value. Keeps the preset start-slot strategy sets reproducible
    // even though individual SOC levels are random.
    std::optional<int> pinned_min_slots;
};

struct GenerationConfig {
    int horizon_slots = 0;
    double slot_hours = 0.0;
    double efficiency = 1.0;
    std::vector<EvCatalogEntry> catalog;
    std::vector<AggregatorSpec> aggregators;
    std::vector<double> base_load_kwh;
    double phi = 0.0;
    double delta = 0.0;
    int weight_min = 10;
    int weight_max = 20;
};

/// Five-aggregator workplace-charging setup: 16 half-hour slots, Level 2
/// chargers (eta = 0.864), Prius/Volt/Leaf fleets, flat tariff constants.
GenerationConfig paper_default_config();

/// Deterministic instance generation; identical (config, seed) pairs yield
/// identical scenarios.
Scenario generate_instance(const GenerationConfig& config, std::uint64_t seed);

// ---- validation ----

struct ValidationIssue {
    std::string location;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
};

/// Checks every type invariant; returns an empty report iff the scenario is
/// well-formed. Never throws.
ValidationReport validate(const Scenario& scenario);

// ---- file I/O ----

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);
std::string scenario_to_json_text(const Scenario& scenario);
Scenario scenario_from_json_text(const std::string& text);

}  // namespace evgame
