#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evgame/payoff_tensor.hpp"

namespace evgame {

inline constexpr const char* kSolutionSchemaVersion = "evgame-solution-v1";

// Probability vector over an aggregator's admissible start slots;
// probs[s-1] is the probability of starting at slot s.
struct MixedStrategy {
    std::vector<double> probs;
};

// EUT evaluates opponents' mixing probabilities objectively; PT passes them
// through Prelec's weighting function with a per-aggregator exponent.
struct BehaviorModel {
    enum class Kind { Eut, Pt };
    Kind kind = Kind::Eut;
    std::vector<double> alphas;  // one per aggregator, ignored for EUT

    static BehaviorModel eut() { return BehaviorModel{}; }
    static BehaviorModel pt(std::vector<double> alphas) {
        return BehaviorModel{Kind::Pt, std::move(alphas)};
    }
    std::string descriptor() const;
};

/// Prelec probability weight exp(-(-ln p)^alpha); w(0)=0 by continuous
/// extension, w(p)=p exactly when alpha=1.
double prelec_weight(double p, double alpha);

struct TrajectoryPoint {
    int iteration = 0;
    double epsilon = 0.0;
    std::vector<MixedStrategy> strategies;
};

struct OuterSolution {
    std::vector<MixedStrategy> strategies;
    BehaviorModel model;
    double beta = 0.7;
    double epsilon = 0.0;     // certified via the pure-deviation certificate
    double eps_target = 0.0;  // threshold the iteration aimed for
    int iterations = 0;
    bool reached_target = false;
    std::string scenario_digest;
    std::string tensor_digest;
    std::vector<TrajectoryPoint> trajectory;  // captured only on request
};

struct OuterOptions {
    double beta = 0.7;
    int max_iters = 100000;
    // Defaults to 1e-3 x median |F_i| over the tensor (scale-aware).
    std::optional<double> eps_target;
    bool record_trajectory = false;
};

/// Expected first-stage payoff Q_i(a) under the given behavioral model.
double expected_payoff(const PayoffTensor& tensor, const std::vector<MixedStrategy>& strategies,
                       const BehaviorModel& model, int aggregator);

/// q_i(t_i, a_-i): expected payoff with own strategy degenerate at start_slot.
double pure_strategy_payoff(const PayoffTensor& tensor, int start_slot,
                            const std::vector<MixedStrategy>& strategies, const BehaviorModel& model,
                            int aggregator);

/// Indicator strategy on the best pure reply; ties break toward the
/// smallest slot index.
MixedStrategy best_reply_vertex(const PayoffTensor& tensor, const std::vector<MixedStrategy>& strategies,
                                const BehaviorModel& model, int aggregator);

/// Max over aggregators of the best pure deviation gain, clipped at zero.
double epsilon_certificate(const PayoffTensor& tensor, const std::vector<MixedStrategy>& strategies,
                           const BehaviorModel& model);

std::vector<MixedStrategy> uniform_strategies(const PayoffTensor& tensor);

double default_eps_target(const PayoffTensor& tensor);

/// Inertia-weighted best-reply iteration a += beta/(k+1) (z - a); stops once
/// the certified epsilon reaches the target or max_iters is exhausted (the
/// latter is reported via reached_target=false, never thrown).
OuterSolution iterate_to_equilibrium(const PayoffTensor& tensor, std::vector<MixedStrategy> init,
                                     const BehaviorModel& model, const OuterOptions& options = {});

void save_solution(const OuterSolution& solution, const std::filesystem::path& path);
OuterSolution load_solution(const std::filesystem::path& path);
/// Content hash of a solution (strategies, model, certificates).
std::string solution_digest(const OuterSolution& solution);

}  // namespace evgame
