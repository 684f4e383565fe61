#pragma once

#include <span>

#include "evgame/charging_profile.hpp"
#include "evgame/scenario.hpp"

namespace evgame {

/// Per-unit grid price phi * L + delta at one slot.
double unit_price(double phi, double delta, double total_load_kwh);

/// Quadratic grid cost phi * L^2 + delta * L at one slot.
double grid_cost(double phi, double delta, double total_load_kwh);

/// Below-target penalty: weight * (target - x)^2 for 0 <= x < target, else 0.
double deviation_cost(double x_kwh, double target_kwh, double weight);

// Recursive-average consumption targets over a charging window, in grid-draw
// kWh: remaining battery demand divided by efficiency and by remaining slots.
struct TargetSchedule {
    int start = 1;
    std::vector<double> values;
};

/// Unrolls the target recursion against a reference profile's cumulative
/// draws. The reference must span the same window and must not deliver more
/// than the fleet demand (relative tolerance 1e-9).
TargetSchedule target_schedule(const Aggregator& agg, int start, const ChargingProfile& reference);

// All spans cover the profile's window. others_load is the aggregate load
// excluding this aggregator (base load plus opponents' draws).
double aggregator_cost(const ChargingProfile& profile, std::span<const double> others_load,
                       const TargetSchedule& targets, std::span<const double> phi,
                       std::span<const double> delta, std::span<const double> weights);

inline double aggregator_payoff(const ChargingProfile& profile, std::span<const double> others_load,
                                const TargetSchedule& targets, std::span<const double> phi,
                                std::span<const double> delta, std::span<const double> weights) {
    return -aggregator_cost(profile, others_load, targets, phi, delta, weights);
}

}  // namespace evgame
