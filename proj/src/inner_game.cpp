#include "evgame/inner_game.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "evgame/errors.hpp"

namespace evgame {

namespace {

std::span<const double> window_span(const std::vector<double>& v, int start, int window) {
    return std::span<const double>(v.data() + (start - 1), static_cast<std::size_t>(window));
}

// Inverse marginal of one slot's cost d/dx [ p(l+x)x + D(x) ], precomputed
// so the bisection loop runs division-free. The marginal is strictly
// increasing, continuous, and piecewise linear with a kink at the target.
struct SlotMarginal {
    double kink_mu;   // marginal at x = max(target, 0)
    double below;     // numerator offset on the below-target branch
    double inv_below; // 1 / (2 phi + 2 weight)
    double above;     // numerator offset phi*others + delta
    double inv_above; // 1 / (2 phi)
    double target;
    double ub;

    static SlotMarginal make(double phi, double delta, double weight, double others, double target,
                             double ub) {
        SlotMarginal s;
        s.target = target;
        s.ub = ub;
        s.above = phi * others + delta;
        s.inv_above = 1.0 / (2.0 * phi);
        s.below = s.above - 2.0 * weight * target;
        s.inv_below = 1.0 / (2.0 * phi + 2.0 * weight);
        s.kink_mu = target > 0.0 ? s.above + 2.0 * phi * target : -1e300;
        return s;
    }

    double at(double x) const {
        return x < target ? below + x / inv_below : above + x / inv_above;
    }

    // Inverse of the marginal, clipped to the box [0, ub].
    double x_of(double mu) const {
        double x = mu < kink_mu ? (mu - below) * inv_below : (mu - above) * inv_above;
        return std::clamp(x, 0.0, ub);
    }

    double slope_at(double x) const {
        if (x <= 0.0 || x >= ub) return 0.0;
        return x < target ? inv_below : inv_above;
    }
};

double total_draw(const std::vector<SlotMarginal>& slots, double mu) {
    double s = 0.0;
    for (const auto& m : slots) s += m.x_of(mu);
    return s;
}

// Scratch for the sweep loop; keeps the per-response work allocation-free.
struct BrWorkspace {
    std::vector<SlotMarginal> slots;
    std::vector<double> candidate;
};

// Slot constants for the self-consistent response solve (normalized like
// SlotMarginal). The target recursion is causal in the slot index, so for a
// fixed multiplier the jointly consistent (profile, targets) pair falls out
// of one forward pass, and the total draw stays nondecreasing in mu (the
// target feedback factor g/(phi+g) is below one).
struct ForwardSlot {
    double above;          // phi*others + delta
    double twophi;
    double twog;
    double inv_below;      // 1/(2 phi + 2 g)
    double inv_above;      // 1/(2 phi)
    double inv_remaining;  // 1/(window - k)
};

double self_consistent_pass(const std::vector<ForwardSlot>& slots, double mu, double budget, double ub,
                            double* x_out) {
    double cumulative = 0.0;
    for (std::size_t k = 0; k < slots.size(); ++k) {
        const ForwardSlot& s = slots[k];
        double target = (budget - cumulative) * s.inv_remaining;
        double x;
        if (target > 0.0 && mu < s.above + s.twophi * target) {
            x = (mu - (s.above - s.twog * target)) * s.inv_below;
        } else {
            x = (mu - s.above) * s.inv_above;
        }
        x = std::clamp(x, 0.0, ub);
        x_out[k] = x;
        cumulative += x;
    }
    return cumulative;
}

// Core of best_response on caller-owned buffers; preconditions checked by
// the public wrapper and the sweep loop.
void br_into(const Scenario& sc, const Aggregator& agg, int start, const double* others_load,
             const double* targets, double lambda_tol, BrWorkspace& ws, double* out) {
    const int window = sc.horizon_slots - start + 1;
    const double ub = agg.slot_energy_bound_kwh(sc.slot_hours);
    const double budget = agg.grid_budget_kwh();
    if (budget > window * ub * (1.0 + 1e-9)) {
        throw ConfigError("best_response: budget " + std::to_string(budget) +
                          " kWh exceeds window capacity " + std::to_string(window * ub) + " kWh");
    }

    ws.slots.resize(window);
    double lo = 0.0, hi = 0.0;
    for (int k = 0; k < window; ++k) {
        double phi = sc.grid.phi[start - 1 + k];
        if (!(phi > 0.0)) throw std::invalid_argument("best_response: phi must be positive");
        ws.slots[k] = SlotMarginal::make(phi, sc.grid.delta[start - 1 + k],
                                         agg.deviation_weights[start - 1 + k], others_load[k],
                                         targets[k], ub);
        double m0 = ws.slots[k].at(0.0);
        double m1 = ws.slots[k].at(ub);
        if (k == 0) {
            lo = m0;
            hi = m1;
        } else {
            lo = std::min(lo, m0);
            hi = std::max(hi, m1);
        }
    }
    // Normalize the marginal scale by a power of two so the bisection is
    // exactly covariant under currency rescaling. The bracket needs no
    // padding: total_draw(lo) = 0 and total_draw(hi) = window * ub.
    const double scale = std::exp2(std::ceil(std::log2(std::max({std::abs(lo), std::abs(hi), 1e-300}))));
    for (auto& slot : ws.slots) {
        slot.kink_mu = slot.kink_mu <= -1e300 ? slot.kink_mu : slot.kink_mu / scale;
        slot.below /= scale;
        slot.above /= scale;
        slot.inv_below *= scale;
        slot.inv_above *= scale;
    }
    lo /= scale;
    hi /= scale;

    // Bisection on the budget multiplier; total_draw is continuous and
    // nondecreasing in mu.
    int guard = 0;
    while (hi - lo > lambda_tol && guard++ < 200) {
        double mid = 0.5 * (lo + hi);
        if (total_draw(ws.slots, mid) < budget) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    double mu = 0.5 * (lo + hi);
    double drawn = 0.0;
    for (int k = 0; k < window; ++k) {
        out[k] = ws.slots[k].x_of(mu);
        drawn += out[k];
    }

    // total_draw is piecewise linear in mu, so a Newton step inside the final
    // bracket removes the remaining budget error when no breakpoint is
    // crossed.
    ws.candidate.resize(window);
    for (int pass = 0; pass < 3; ++pass) {
        double err = budget - drawn;
        if (std::abs(err) <= 1e-12 * std::max(1.0, budget)) break;
        double slope = 0.0;
        for (int k = 0; k < window; ++k) slope += ws.slots[k].slope_at(out[k]);
        if (slope <= 0.0) break;
        double mu_next = mu + err / slope;
        double cand_total = 0.0;
        for (int k = 0; k < window; ++k) {
            ws.candidate[k] = ws.slots[k].x_of(mu_next);
            cand_total += ws.candidate[k];
        }
        if (std::abs(budget - cand_total) < std::abs(err)) {
            mu = mu_next;
            drawn = cand_total;
            for (int k = 0; k < window; ++k) out[k] = ws.candidate[k];
        } else {
            break;
        }
    }
}

std::vector<int> latest_starts(const Scenario& sc) {
    std::vector<int> latest;
    latest.reserve(sc.aggregators.size());
    for (const auto& agg : sc.aggregators) latest.push_back(agg.latest_start(sc.horizon_slots));
    return latest;
}

// Random point of the box-and-budget set: budget spread by exponential
// weights, then excess clamped to the box and the deficit pushed back into
// the remaining slot capacity (one pass restores the budget exactly because
// total capacity is at least the budget).
std::vector<double> random_feasible_profile(double budget, double ub, int window, std::mt19937_64& eng) {
    std::vector<double> x(window, 0.0);
    if (budget <= 0.0) return x;
    double sum = 0.0;
    for (int k = 0; k < window; ++k) {
        double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
        x[k] = -std::log1p(-u);
        sum += x[k];
    }
    for (int k = 0; k < window; ++k) x[k] *= budget / sum;

    double clamped_total = 0.0;
    for (int k = 0; k < window; ++k) {
        x[k] = std::min(x[k], ub);
        clamped_total += x[k];
    }
    double deficit = budget - clamped_total;
    if (deficit > 0.0) {
        double capacity = 0.0;
        for (int k = 0; k < window; ++k) capacity += ub - x[k];
        if (capacity > 0.0) {
            for (int k = 0; k < window; ++k) x[k] += deficit * (ub - x[k]) / capacity;
        }
    }
    return x;
}

struct GapReport {
    std::vector<double> payoffs;
    std::vector<double> gaps;
};

// Payoffs at the given joint profile (targets self-consistent with each
// aggregator's own profile) and the unilateral best-response improvements.
GapReport unilateral_gaps(const Scenario& sc, const std::vector<ChargingProfile>& profiles) {
    const int N = sc.num_aggregators();

    std::vector<double> aggregate = sc.grid.base_load_kwh;
    for (const auto& p : profiles) {
        for (int k = 0; k < p.window(); ++k) aggregate[p.start - 1 + k] += p.values[k];
    }

    GapReport report;
    report.payoffs.resize(N);
    report.gaps.resize(N);
    for (int i = 0; i < N; ++i) {
        const auto& agg = sc.aggregators[i];
        const auto& mine = profiles[i];
        const int start = mine.start;
        const int window = mine.window();

        std::vector<double> others(window);
        for (int k = 0; k < window; ++k) others[k] = aggregate[start - 1 + k] - mine.values[k];

        TargetSchedule targets = target_schedule(agg, start, mine);
        auto phi = window_span(sc.grid.phi, start, window);
        auto delta = window_span(sc.grid.delta, start, window);
        auto weights = window_span(agg.deviation_weights, start, window);

        double current = aggregator_payoff(mine, others, targets, phi, delta, weights);
        ChargingProfile br = best_response(sc, agg, start, others, targets);
        double best = aggregator_payoff(br, others, targets, phi, delta, weights);

        report.payoffs[i] = current;
        report.gaps[i] = best - current;
    }
    return report;
}

}  // namespace

ChargingProfile best_response(const Scenario& sc, const Aggregator& agg, int start,
                              std::span<const double> others_load, const TargetSchedule& targets,
                              double lambda_tol) {
    const int T = sc.horizon_slots;
    if (start < 1 || start > T) throw std::invalid_argument("best_response: start slot out of range");
    const int window = T - start + 1;
    if (static_cast<int>(others_load.size()) != window || static_cast<int>(targets.values.size()) != window ||
        targets.start != start) {
        throw std::invalid_argument("best_response: window span mismatch");
    }
    ChargingProfile profile;
    profile.start = start;
    profile.values.resize(window);
    BrWorkspace ws;
    br_into(sc, agg, start, others_load.data(), targets.values.data(), lambda_tol, ws,
            profile.values.data());
    return profile;
}

SubgameSolution solve_subgame(const Scenario& sc, const std::vector<int>& starts,
                              const SubgameOptions& opt) {
    const int T = sc.horizon_slots;
    const int N = sc.num_aggregators();
    if (static_cast<int>(starts.size()) != N) {
        throw ConfigError("solve_subgame: start profile size does not match aggregator count");
    }
    auto latest = latest_starts(sc);
    for (int i = 0; i < N; ++i) {
        if (starts[i] < 1 || starts[i] > latest[i]) {
            throw ConfigError("solve_subgame: start slot " + std::to_string(starts[i]) +
                              " outside aggregator " + std::to_string(i + 1) + "'s admissible set {1.." +
                              std::to_string(latest[i]) + "}");
        }
    }

    std::vector<ChargingProfile> current(N);
    for (int i = 0; i < N; ++i) {
        const auto& agg = sc.aggregators[i];
        const int window = T - starts[i] + 1;
        current[i].start = starts[i];
        const double budget = agg.grid_budget_kwh();
        const double ub = agg.slot_energy_bound_kwh(sc.slot_hours);
        if (opt.init_seed) {
            std::mt19937_64 eng(*opt.init_seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(i + 1));
            current[i].values = random_feasible_profile(budget, ub, window, eng);
        } else {
            current[i].values.assign(window, budget / window);
        }
    }

    SubgameSolution sol;
    std::vector<ChargingProfile> next(N);
    double residual = 0.0;
    int sweeps = 0;
    bool converged = false;

    // Default relaxation: the pricing-branch eigenvalue of the synchronous
    // sweep is -(N-1)/2, stable for w < 4/(N+1); 3/(N+1) leaves margin while
    // keeping the positive modes fast.
    const double relax = opt.relaxation ? *opt.relaxation : std::min(1.0, 3.0 / (N + 1));
    if (!(relax > 0.0 && relax <= 1.0)) throw ConfigError("solve_subgame: relaxation outside (0,1]");

    std::vector<double> aggregate(T);
    std::vector<double> others(T);
    std::vector<ForwardSlot> fslots(T);
    std::vector<double> work(T);

    // Response of one aggregator with its own target recursion already
    // equilibrated against the response itself: bisection on the budget
    // multiplier around self-consistent forward passes.
    auto self_consistent_response = [&](int i, const double* others_load, double* out) {
        const auto& agg = sc.aggregators[i];
        const int start = starts[i];
        const int window = T - start + 1;
        const double ub = agg.slot_energy_bound_kwh(sc.slot_hours);
        const double budget = agg.grid_budget_kwh();
        if (budget > window * ub * (1.0 + 1e-9)) {
            throw ConfigError("solve_subgame: budget exceeds the window capacity");
        }

        fslots.resize(window);
        double lo = 0.0, hi = 0.0;
        {
            // Marginal bounds at the self-consistent all-zero and all-ub
            // profiles; these bracket the multiplier exactly.
            double cum_zero = 0.0, cum_ub = 0.0;
            for (int k = 0; k < window; ++k) {
                double phi = sc.grid.phi[start - 1 + k];
                if (!(phi > 0.0)) throw std::invalid_argument("solve_subgame: phi must be positive");
                double delta = sc.grid.delta[start - 1 + k];
                double weight = agg.deviation_weights[start - 1 + k];
                ForwardSlot s;
                s.above = phi * others_load[k] + delta;
                s.twophi = 2.0 * phi;
                s.twog = 2.0 * weight;
                s.inv_below = 1.0 / (2.0 * phi + 2.0 * weight);
                s.inv_above = 1.0 / (2.0 * phi);
                s.inv_remaining = 1.0 / (window - k);
                fslots[k] = s;

                double tgt0 = std::max((budget - cum_zero) * s.inv_remaining, 0.0);
                double m0 = tgt0 > 0.0 ? s.above - s.twog * tgt0 : s.above;
                double tgt1 = std::max((budget - cum_ub) * s.inv_remaining, 0.0);
                double m1 = ub < tgt1 ? s.above - s.twog * tgt1 + ub / s.inv_below
                                      : s.above + ub / s.inv_above;
                cum_ub += ub;
                if (k == 0) {
                    lo = m0;
                    hi = m1;
                } else {
                    lo = std::min(lo, m0);
                    hi = std::max(hi, m1);
                }
            }
        }
        const double scale =
            std::exp2(std::ceil(std::log2(std::max({std::abs(lo), std::abs(hi), 1e-300}))));
        for (auto& s : fslots) {
            s.above /= scale;
            s.twophi /= scale;
            s.twog /= scale;
            s.inv_below *= scale;
            s.inv_above *= scale;
        }
        lo /= scale;
        hi /= scale;

        double h_lo = 0.0, h_hi = window * ub;
        int guard = 0;
        while (hi - lo > opt.lambda_tol && guard++ < 200) {
            double mid = 0.5 * (lo + hi);
            double h = self_consistent_pass(fslots, mid, budget, ub, out);
            if (h < budget) {
                lo = mid;
                h_lo = h;
            } else {
                hi = mid;
                h_hi = h;
            }
        }
        double mu = hi;
        double drawn = self_consistent_pass(fslots, mu, budget, ub, out);
        // The total draw is piecewise linear in mu; a secant step inside the
        // final bracket removes the leftover budget error.
        for (int pass = 0; pass < 3 && h_hi > h_lo; ++pass) {
            if (std::abs(budget - drawn) <= 1e-12 * std::max(1.0, budget)) break;
            double mu_next = lo + (budget - h_lo) * (hi - lo) / (h_hi - h_lo);
            double h = self_consistent_pass(fslots, mu_next, budget, ub, work.data());
            if (std::abs(budget - h) < std::abs(budget - drawn)) {
                mu = mu_next;
                drawn = h;
                std::copy(work.begin(), work.begin() + window, out);
            } else {
                break;
            }
            if (h < budget) {
                lo = mu_next;
                h_lo = h;
            } else {
                hi = mu_next;
                h_hi = h;
            }
        }
    };

    auto one_sweep = [&]() {
        std::copy(sc.grid.base_load_kwh.begin(), sc.grid.base_load_kwh.end(), aggregate.begin());
        for (const auto& p : current) {
            for (int k = 0; k < p.window(); ++k) aggregate[p.start - 1 + k] += p.values[k];
        }

        for (int i = 0; i < N; ++i) {
            const int start = starts[i];
            const int window = T - start + 1;
            for (int k = 0; k < window; ++k) others[k] = aggregate[start - 1 + k] - current[i].values[k];
            next[i].start = start;
            next[i].values.resize(window);
            self_consistent_response(i, others.data(), next[i].values.data());
            for (int k = 0; k < window; ++k) {
                next[i].values[k] = (1.0 - relax) * current[i].values[k] + relax * next[i].values[k];
            }
        }

        double step_sq = 0.0, norm_sq = 0.0;
        for (int i = 0; i < N; ++i) {
            for (int k = 0; k < next[i].window(); ++k) {
                double d = next[i].values[k] - current[i].values[k];
                step_sq += d * d;
                norm_sq += next[i].values[k] * next[i].values[k];
            }
        }
        residual = norm_sq > 0.0 ? std::sqrt(step_sq / norm_sq) : 0.0;
        std::swap(current, next);
        if (opt.sweep_observer) opt.sweep_observer(sweeps, current);
    };

    // The step-norm test is only a proxy for the certification gap, and a
    // converged iterate can still miss the gap threshold when a payoff is
    // small. Certify, and on failure tighten the residual target and keep
    // sweeping within the same sweep budget.
    GapReport gaps;
    bool certified = false;
    double br_gap = 0.0;
    double residual_target = opt.eps_alg;
    for (int attempt = 0; attempt < 3; ++attempt) {
        while (sweeps < opt.max_sweeps && !(sweeps > 0 && residual <= residual_target)) {
            ++sweeps;
            one_sweep();
        }
        converged = sweeps > 0 && residual <= opt.eps_alg;

        gaps = unilateral_gaps(sc, current);
        certified = true;
        br_gap = 0.0;
        for (int i = 0; i < N; ++i) {
            br_gap = std::max(br_gap, gaps.gaps[i]);
            if (gaps.gaps[i] > opt.cert_rel_tol * std::max(1.0, std::abs(gaps.payoffs[i]))) {
                certified = false;
            }
        }
        if (certified || sweeps >= opt.max_sweeps) break;
        residual_target *= 1e-2;
    }

    sol.profiles = std::move(current);
    sol.payoffs = std::move(gaps.payoffs);
    sol.iterations = sweeps;
    sol.residual = residual;
    sol.br_gap = std::max(br_gap, 0.0);
    sol.converged = converged;
    sol.certified = certified;
    return sol;
}

double verify_equilibrium(const Scenario& sc, const SubgameSolution& solution) {
    GapReport gaps = unilateral_gaps(sc, solution.profiles);
    double worst = 0.0;
    for (double g : gaps.gaps) worst = std::max(worst, g);
    return worst;
}

}  // namespace evgame
