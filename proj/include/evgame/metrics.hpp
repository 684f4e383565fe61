#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "evgame/outer_game.hpp"
#include "evgame/payoff_tensor.hpp"

namespace evgame {

// All fleets charge at maximum rate from slot 1; the comparison point for
// savings and PAR reduction. Costs use the same price and deviation models.
struct BaselineResult {
    std::vector<double> cost;                 // per aggregator
    std::vector<double> aggregate_load_kwh;   // per slot, incl. base load
    std::vector<ChargingProfile> profiles;
    double par = 0.0;
};

BaselineResult uncoordinated_baseline(const Scenario& scenario);

// Memoized per-start-profile equilibrium profiles. The tensor's record
// layout stores payoffs only, so expected-load aggregation re-solves the
// subgames it touches; the cache makes repeated reports cheap.
class SubgameProfileCache {
public:
    SubgameProfileCache(const Scenario& scenario, const PayoffTensor& tensor,
                        SubgameOptions options = {});

    const std::vector<ChargingProfile>& profiles_for(std::uint64_t rank);
    std::size_t solved_count() const { return cache_.size(); }

private:
    const Scenario& scenario_;
    const PayoffTensor& tensor_;
    SubgameOptions options_;
    std::unordered_map<std::uint64_t, std::vector<ChargingProfile>> cache_;
};

struct ExpectedOutcome {
    std::vector<double> expected_cost;                    // per aggregator
    std::vector<std::vector<double>> expected_profile;    // [aggregator][slot], full horizon
    std::vector<double> expected_aggregate_load_kwh;      // per slot, incl. base load
    double par = 0.0;
    double covered_probability = 1.0;                     // mass of the enumerated profile set
    std::string model_descriptor;
    std::string scenario_digest;
    std::string tensor_digest;
};

struct OutcomeOptions {
    // Start profiles are enumerated in decreasing probability until at most
    // this much mass is left out; the dropped tail biases expected loads by
    // no more than tail * max slot draw.
    double tail_mass_tol = 1e-7;
};

/// Expectations under the objective product measure of the solution's
/// strategies (also under PT: weighting distorts decisions, not play
/// frequencies). Expected costs come exactly from the tensor.
ExpectedOutcome expected_outcome(const Scenario& scenario, const PayoffTensor& tensor,
                                 const OuterSolution& solution, SubgameProfileCache& cache,
                                 const OutcomeOptions& options = {});

struct SavingsReport {
    std::vector<double> saving_pct;     // per aggregator
    double par_reduction_pct = 0.0;
    double baseline_par = 0.0;
    double coordinated_par = 0.0;
};

SavingsReport savings_report(const BaselineResult& baseline, const ExpectedOutcome& coordinated);

// ---- tabular report files (digest-stamped TSV) ----

struct LabeledOutcome {
    std::string label;
    const ExpectedOutcome* outcome = nullptr;
    std::string solution_digest;
};

void write_savings_table(const std::filesystem::path& path, const Scenario& scenario,
                         const BaselineResult& baseline, const std::vector<LabeledOutcome>& outcomes);
void write_expected_load_table(const std::filesystem::path& path, const Scenario& scenario,
                               const BaselineResult& baseline, const std::vector<LabeledOutcome>& outcomes);
void write_slot1_load_table(const std::filesystem::path& path, const Scenario& scenario,
                            const std::vector<LabeledOutcome>& outcomes);

}  // namespace evgame
