#include "evgame/cost_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace evgame {

double unit_price(double phi, double delta, double total_load_kwh) {
    if (total_load_kwh < 0.0) throw std::invalid_argument("unit_price: negative total load");
    return phi * total_load_kwh + delta;
}

double grid_cost(double phi, double delta, double total_load_kwh) {
    if (total_load_kwh < 0.0) throw std::invalid_argument("grid_cost: negative total load");
    return (phi * total_load_kwh + delta) * total_load_kwh;
}

double deviation_cost(double x_kwh, double target_kwh, double weight) {
    if (x_kwh < 0.0) throw std::invalid_argument("deviation_cost: negative consumption");
    if (x_kwh >= target_kwh) return 0.0;
    double gap = target_kwh - x_kwh;
    return weight * gap * gap;
}

TargetSchedule target_schedule(const Aggregator& agg, int start, const ChargingProfile& reference) {
    if (reference.start != start) {
        throw std::invalid_argument("target_schedule: reference profile starts at slot " +
                                    std::to_string(reference.start) + ", expected " + std::to_string(start));
    }
    const int window = reference.window();
    if (window < 1) throw std::invalid_argument("target_schedule: empty reference window");

    const double budget = agg.grid_budget_kwh();
    const double delivered = reference.total();
    if (delivered > budget + 1e-9 * std::max(1.0, budget)) {
        throw std::invalid_argument("target_schedule: reference profile over-delivers the fleet demand");
    }

    TargetSchedule ts;
    ts.start = start;
    ts.values.resize(window);
    double cumulative = 0.0;
    for (int k = 0; k < window; ++k) {
        int remaining = window - k;
        double target = (budget - cumulative) / remaining;
        ts.values[k] = std::max(target, 0.0);  // clamp float residue near full delivery
        cumulative += reference.values[k];
    }
    return ts;
}

double aggregator_cost(const ChargingProfile& profile, std::span<const double> others_load,
                       const TargetSchedule& targets, std::span<const double> phi,
                       std::span<const double> delta, std::span<const double> weights) {
    const std::size_t window = profile.values.size();
    if (others_load.size() != window || targets.values.size() != window || phi.size() != window ||
        delta.size() != window || weights.size() != window || targets.start != profile.start) {
        throw std::invalid_argument("aggregator_cost: window span mismatch");
    }
    double cost = 0.0;
    for (std::size_t k = 0; k < window; ++k) {
        double x = profile.values[k];
        double price = unit_price(phi[k], delta[k], others_load[k] + x);
        cost += price * x + deviation_cost(x, targets.values[k], weights[k]);
    }
    return cost;
}

}  // namespace evgame
