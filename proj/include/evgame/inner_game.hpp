#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "evgame/charging_profile.hpp"
#include "evgame/cost_model.hpp"
#include "evgame/scenario.hpp"

namespace evgame {

struct SubgameOptions {
    double eps_alg = 1e-6;      // relative step-norm termination
    int max_sweeps = 500;
    double lambda_tol = 1e-12;  // bisection tolerance on the normalized multiplier
    double cert_rel_tol = 1e-6; // unilateral-gap certification threshold
    // Damped synchronous update x <- (1-w) x + w BR(x). Above the deviation
    // target the best response tracks opponents' loads with slope -1/2, so
    // the undamped sweep cycles once several aggregators share slots; the
    // sweep map is stable for w < 4/(N+1) and the default is 3/(N+1),
    // clamped to 1. The fixed point and per-iterate feasibility are
    // unaffected. Unset means the default.
    std::optional<double> relaxation;
    // Random feasible initial profiles when set; the default is the uniform
    // budget-spread profile.
    std::optional<std::uint64_t> init_seed;
    // Called after every synchronous sweep with the fresh iterate.
    std::function<void(int sweep, const std::vector<ChargingProfile>&)> sweep_observer;
};

struct SubgameSolution {
    std::vector<ChargingProfile> profiles;  // one per aggregator
    std::vector<double> payoffs;            // U_i at the fixed point
    int iterations = 0;                     // sweeps performed
    double residual = 0.0;                  // final relative step norm
    double br_gap = 0.0;                    // certified max unilateral improvement
    bool converged = false;
    bool certified = false;
};

// Exact maximizer of one aggregator's payoff over its box-and-budget set,
// holding opponents' loads and the target schedule fixed. others_load spans
// the window [start, T] and includes the base load.
ChargingProfile best_response(const Scenario& scenario, const Aggregator& agg, int start,
                              std::span<const double> others_load, const TargetSchedule& targets,
                              double lambda_tol = 1e-12);

// Synchronous best-response iteration to the subgame's Nash equilibrium.
// starts[i] is aggregator i's 1-based charging start slot.
SubgameSolution solve_subgame(const Scenario& scenario, const std::vector<int>& starts,
                              const SubgameOptions& options = {});

/// Re-solves every aggregator's best response against the solution's loads
/// and returns the maximum payoff improvement found (clipped at zero).
double verify_equilibrium(const Scenario& scenario, const SubgameSolution& solution);

}  // namespace evgame
