#pragma once

// Brute-force oracles for the optimization paths. Cost evaluation is
// re-implemented here from the price and deviation definitions so the
// oracles stay independent of the library code they check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace evgame::testing {

inline double oracle_slot_cost(double x, double others, double phi, double delta, double weight,
                               double target) {
    double price = phi * (others + x) + delta;
    double dev = (x >= 0.0 && x < target) ? weight * (target - x) * (target - x) : 0.0;
    return price * x + dev;
}

inline double oracle_profile_cost(const std::vector<double>& x, const std::vector<double>& others,
                                  const std::vector<double>& phi, const std::vector<double>& delta,
                                  const std::vector<double>& weight, const std::vector<double>& target) {
    double c = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        c += oracle_slot_cost(x[k], others[k], phi[k], delta[k], weight[k], target[k]);
    }
    return c;
}

// Exhaustive search over the discretized budget-and-box set for windows of
// one to three slots. Free slots run over the grid; the last slot absorbs
// the remaining budget.
inline double oracle_best_cost(double budget, double ub, double step, const std::vector<double>& others,
                               const std::vector<double>& phi, const std::vector<double>& delta,
                               const std::vector<double>& weight, const std::vector<double>& target,
                               std::vector<double>* best_x = nullptr) {
    const std::size_t window = others.size();
    const double slack = 1e-9;
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](const std::vector<double>& x) {
        double c = oracle_profile_cost(x, others, phi, delta, weight, target);
        if (c < best) {
            best = c;
            if (best_x) *best_x = x;
        }
    };
    if (window == 1) {
        if (budget > ub + slack) throw std::invalid_argument("oracle: infeasible budget");
        consider({budget});
        return best;
    }
    const int steps = static_cast<int>(std::floor(ub / step + 0.5));
    if (window == 2) {
        for (int a = 0; a <= steps; ++a) {
            double x1 = a * step;
            double x2 = budget - x1;
            if (x2 < -slack || x2 > ub + slack) continue;
            consider({x1, std::clamp(x2, 0.0, ub)});
        }
        return best;
    }
    if (window == 3) {
        for (int a = 0; a <= steps; ++a) {
            for (int b = 0; b <= steps; ++b) {
                double x1 = a * step;
                double x2 = b * step;
                double x3 = budget - x1 - x2;
                if (x3 < -slack || x3 > ub + slack) continue;
                consider({x1, x2, std::clamp(x3, 0.0, ub)});
            }
        }
        return best;
    }
    throw std::invalid_argument("oracle: unsupported window size");
}

// Two-player, two-slot joint game on a shared horizon: each player's
// feasible set is one-dimensional after the budget equality, so the full
// strategy product can be scanned. Player p's parameters sit at index p.
struct JointGame2x2 {
    std::vector<double> budget, ub;                  // per player
    std::vector<double> base;                        // per slot
    std::vector<double> phi, delta;                  // per slot
    std::vector<std::vector<double>> weight, target; // [player][slot]
};

struct JointNashPoint {
    double x1_p0 = 0.0, x1_p1 = 0.0;    // slot-1 draws; slot 2 takes the rest
    double cost_p0 = 0.0, cost_p1 = 0.0;
};

inline std::vector<JointNashPoint> joint_grid_nash_2x2(const JointGame2x2& game, double step) {
    auto feasible = [&](int p, double x1) {
        double x2 = game.budget[p] - x1;
        return x1 >= -1e-9 && x1 <= game.ub[p] + 1e-9 && x2 >= -1e-9 && x2 <= game.ub[p] + 1e-9;
    };
    auto cost = [&](int p, double own_x1, double opp_x1) {
        int q = 1 - p;
        std::vector<double> own{own_x1, game.budget[p] - own_x1};
        std::vector<double> others{game.base[0] + opp_x1, game.base[1] + (game.budget[q] - opp_x1)};
        return oracle_profile_cost(own, others, game.phi, game.delta, game.weight[p], game.target[p]);
    };
    auto grid_points = [&](int p) {
        std::vector<double> xs;
        int steps = static_cast<int>(std::floor(game.ub[p] / step + 0.5));
        for (int a = 0; a <= steps; ++a) {
            double x1 = a * step;
            if (feasible(p, x1)) xs.push_back(x1);
        }
        return xs;
    };
    std::vector<double> xs0 = grid_points(0), xs1 = grid_points(1);

    std::vector<JointNashPoint> points;
    for (double a : xs0) {
        for (double b : xs1) {
            double c0 = cost(0, a, b);
            double best0 = c0;
            for (double alt : xs0) best0 = std::min(best0, cost(0, alt, b));
            if (c0 > best0 + 1e-12) continue;
            double c1 = cost(1, b, a);
            double best1 = c1;
            for (double alt : xs1) best1 = std::min(best1, cost(1, alt, a));
            if (c1 > best1 + 1e-12) continue;
            points.push_back({a, b, c0, c1});
        }
    }
    return points;
}

}  // namespace evgame::testing
