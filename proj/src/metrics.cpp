#include "evgame/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "evgame/cost_model.hpp"
#include "evgame/errors.hpp"
#include "evgame/inner_game.hpp"

namespace evgame {

namespace {

double par_of(const std::vector<double>& load) {
    double peak = 0.0, sum = 0.0;
    for (double v : load) {
        peak = std::max(peak, v);
        sum += v;
    }
    double mean = sum / load.size();
    if (!(mean > 0.0)) throw ConfigError("PAR undefined for a non-positive mean load");
    return peak / mean;
}

std::span<const double> window_span(const std::vector<double>& v, int start, int window) {
    return std::span<const double>(v.data() + (start - 1), static_cast<std::size_t>(window));
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_provenance(std::ofstream& out, const Scenario& scenario,
                      const std::vector<LabeledOutcome>& outcomes) {
    out << "# scenario_digest: " << scenario.digest() << "\n";
    for (const auto& lo : outcomes) {
        out << "# solution[" << lo.label << "] tensor_digest: " << lo.outcome->tensor_digest
            << " solution_digest: " << lo.solution_digest << " model: " << lo.outcome->model_descriptor
            << "\n";
    }
}

std::ofstream open_table(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report file: " + path.string());
    return out;
}

}  // namespace

BaselineResult uncoordinated_baseline(const Scenario& sc) {
    const int T = sc.horizon_slots;
    const int N = sc.num_aggregators();

    BaselineResult result;
    result.profiles.resize(N);
    result.cost.assign(N, 0.0);
    result.aggregate_load_kwh = sc.grid.base_load_kwh;

    for (int i = 0; i < N; ++i) {
        const auto& agg = sc.aggregators[i];
        auto& profile = result.profiles[i];
        profile.start = 1;
        profile.values.assign(T, 0.0);
        std::vector<double> remaining(agg.evs.size());
        for (std::size_t v = 0; v < agg.evs.size(); ++v) remaining[v] = agg.evs[v].demand_kwh;
        for (int t = 0; t < T; ++t) {
            double battery = 0.0;
            for (std::size_t v = 0; v < agg.evs.size(); ++v) {
                double delivered = std::min(agg.evs[v].max_rate_kw * sc.slot_hours, remaining[v]);
                remaining[v] -= delivered;
                if (remaining[v] < 1e-9) remaining[v] = 0.0;  // drain float residue
                battery += delivered;
            }
            profile.values[t] = battery / agg.efficiency;
            result.aggregate_load_kwh[t] += profile.values[t];
        }
    }

    for (int i = 0; i < N; ++i) {
        const auto& agg = sc.aggregators[i];
        const auto& profile = result.profiles[i];
        std::vector<double> others(T);
        for (int t = 0; t < T; ++t) others[t] = result.aggregate_load_kwh[t] - profile.values[t];
        TargetSchedule targets = target_schedule(agg, 1, profile);
        result.cost[i] = aggregator_cost(profile, others, targets, window_span(sc.grid.phi, 1, T),
                                         window_span(sc.grid.delta, 1, T),
                                         window_span(agg.deviation_weights, 1, T));
    }
    result.par = par_of(result.aggregate_load_kwh);
    return result;
}

SubgameProfileCache::SubgameProfileCache(const Scenario& scenario, const PayoffTensor& tensor,
                                         SubgameOptions options)
    : scenario_(scenario), tensor_(tensor), options_(std::move(options)) {
    if (tensor.scenario_digest() != scenario.digest()) {
        throw ConfigError("profile cache: tensor was built for a different scenario");
    }
}

const std::vector<ChargingProfile>& SubgameProfileCache::profiles_for(std::uint64_t rank) {
    auto it = cache_.find(rank);
    if (it != cache_.end()) return it->second;
    StartProfile profile = tensor_.profile_at(rank);
    SubgameSolution sol = solve_subgame(scenario_, profile.starts, options_);
    if (!sol.certified) {
        throw ConvergenceError("profile cache: subgame at rank " + std::to_string(rank) +
                               " failed equilibrium certification");
    }
    return cache_.emplace(rank, std::move(sol.profiles)).first->second;
}

ExpectedOutcome expected_outcome(const Scenario& sc, const PayoffTensor& tensor,
                                 const OuterSolution& solution, SubgameProfileCache& cache,
                                 const OutcomeOptions& opt) {
    if (!tensor.complete()) throw ConfigError("expected_outcome: incomplete tensor");
    if (solution.scenario_digest != sc.digest()) {
        throw ConfigError("expected_outcome: solution was computed for a different scenario");
    }
    if (solution.tensor_digest != tensor.content_digest()) {
        throw ConfigError("expected_outcome: solution was computed for a different tensor");
    }
    if (static_cast<int>(solution.strategies.size()) != tensor.num_aggregators()) {
        throw ConfigError("expected_outcome: solution strategy count does not match the tensor");
    }
    for (int i = 0; i < tensor.num_aggregators(); ++i) {
        const auto& probs = solution.strategies[i].probs;
        if (static_cast<int>(probs.size()) != tensor.dims()[i]) {
            throw ConfigError("expected_outcome: strategy support of aggregator " + std::to_string(i + 1) +
                              " does not match the tensor");
        }
        double sum = 0.0;
        for (double p : probs) {
            if (p < 0.0) throw ConfigError("expected_outcome: negative strategy probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw ConfigError("expected_outcome: strategy of aggregator " + std::to_string(i + 1) +
                              " does not sum to 1");
        }
    }
    const int T = sc.horizon_slots;
    const int N = sc.num_aggregators();
    const std::uint64_t K = tensor.size();
    const auto& dims = tensor.dims();

    ExpectedOutcome out;
    out.model_descriptor = solution.model.descriptor();
    out.scenario_digest = solution.scenario_digest;
    out.tensor_digest = solution.tensor_digest;
    out.expected_cost.assign(N, 0.0);
    out.expected_profile.assign(N, std::vector<double>(T, 0.0));

    // Objective product probabilities over all start profiles, odometer order.
    std::vector<double> prob(K);
    {
        std::vector<int> digit(N, 0);
        std::vector<double> prefix(N + 1);
        prefix[0] = 1.0;
        for (int j = 0; j < N; ++j) prefix[j + 1] = prefix[j] * solution.strategies[j].probs[0];
        for (std::uint64_t k = 0;;) {
            prob[k] = prefix[N];
            for (int i = 0; i < N; ++i) out.expected_cost[i] -= prob[k] * tensor.entry(k).payoffs[i];
            if (++k == K) break;
            int j = N - 1;
            for (;;) {
                if (++digit[j] < dims[j]) break;
                digit[j] = 0;
                --j;
            }
            for (; j < N; ++j) prefix[j + 1] = prefix[j] * solution.strategies[j].probs[digit[j]];
        }
    }

    // Expected loads: visit profiles in decreasing probability until the
    // uncovered tail is negligible, re-solving only the subgames touched.
    std::vector<std::uint64_t> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::uint64_t a, std::uint64_t b) {
        if (prob[a] != prob[b]) return prob[a] > prob[b];
        return a < b;
    });

    double covered = 0.0;
    for (std::uint64_t rank : order) {
        if (covered >= 1.0 - opt.tail_mass_tol) break;
        double p = prob[rank];
        if (p <= 0.0) break;
        const auto& profiles = cache.profiles_for(rank);
        for (int i = 0; i < N; ++i) {
            const auto& cp = profiles[i];
            for (int k = 0; k < cp.window(); ++k) {
                out.expected_profile[i][cp.start - 1 + k] += p * cp.values[k];
            }
        }
        covered += p;
    }
    out.covered_probability = covered;

    out.expected_aggregate_load_kwh = sc.grid.base_load_kwh;
    for (int i = 0; i < N; ++i) {
        for (int t = 0; t < T; ++t) out.expected_aggregate_load_kwh[t] += out.expected_profile[i][t];
    }
    out.par = par_of(out.expected_aggregate_load_kwh);
    return out;
}

SavingsReport savings_report(const BaselineResult& baseline, const ExpectedOutcome& coordinated) {
    const std::size_t n = baseline.cost.size();
    if (coordinated.expected_cost.size() != n) {
        throw ConfigError("savings_report: aggregator count mismatch");
    }
    SavingsReport report;
    report.saving_pct.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(baseline.cost[i] > 0.0)) {
            throw ConfigError("savings_report: baseline cost of aggregator " + std::to_string(i + 1) +
                              " is zero; percentage savings undefined");
        }
        report.saving_pct[i] = (baseline.cost[i] - coordinated.expected_cost[i]) / baseline.cost[i] * 100.0;
    }
    report.baseline_par = baseline.par;
    report.coordinated_par = coordinated.par;
    report.par_reduction_pct = (baseline.par - coordinated.par) / baseline.par * 100.0;
    return report;
}

void write_savings_table(const std::filesystem::path& path, const Scenario& scenario,
                         const BaselineResult& baseline, const std::vector<LabeledOutcome>& outcomes) {
    auto out = open_table(path);
    write_provenance(out, scenario, outcomes);
    out << "aggregator\tbaseline_cost";
    for (const auto& lo : outcomes) out << "\texpected_cost[" << lo.label << "]\tsaving_pct[" << lo.label << "]";
    out << "\n";
    for (std::size_t i = 0; i < baseline.cost.size(); ++i) {
        out << (i + 1) << "\t" << fmt(baseline.cost[i]);
        for (const auto& lo : outcomes) {
            SavingsReport rep = savings_report(baseline, *lo.outcome);
            out << "\t" << fmt(lo.outcome->expected_cost[i]) << "\t" << fmt(rep.saving_pct[i]);
        }
        out << "\n";
    }
    out << "# PAR baseline: " << fmt(baseline.par) << "\n";
    for (const auto& lo : outcomes) {
        SavingsReport rep = savings_report(baseline, *lo.outcome);
        out << "# PAR[" << lo.label << "]: " << fmt(lo.outcome->par)
            << " reduction_pct: " << fmt(rep.par_reduction_pct) << "\n";
    }
    if (!out) throw IoError("failed while writing report file: " + path.string());
}

void write_expected_load_table(const std::filesystem::path& path, const Scenario& scenario,
                               const BaselineResult& baseline, const std::vector<LabeledOutcome>& outcomes) {
    auto out = open_table(path);
    write_provenance(out, scenario, outcomes);
    out << "slot\tbase_load_kwh\tbaseline_total_kwh";
    for (const auto& lo : outcomes) out << "\texpected_total_kwh[" << lo.label << "]";
    out << "\n";
    for (int t = 0; t < scenario.horizon_slots; ++t) {
        out << (t + 1) << "\t" << fmt(scenario.grid.base_load_kwh[t]) << "\t"
            << fmt(baseline.aggregate_load_kwh[t]);
        for (const auto& lo : outcomes) out << "\t" << fmt(lo.outcome->expected_aggregate_load_kwh[t]);
        out << "\n";
    }
    if (!out) throw IoError("failed while writing report file: " + path.string());
}

void write_slot1_load_table(const std::filesystem::path& path, const Scenario& scenario,
                            const std::vector<LabeledOutcome>& outcomes) {
    auto out = open_table(path);
    write_provenance(out, scenario, outcomes);
    out << "aggregator";
    for (const auto& lo : outcomes) out << "\tslot1_expected_load_kwh[" << lo.label << "]";
    out << "\n";
    for (int i = 0; i < scenario.num_aggregators(); ++i) {
        out << (i + 1);
        for (const auto& lo : outcomes) out << "\t" << fmt(lo.outcome->expected_profile[i][0]);
        out << "\n";
    }
    if (!out) throw IoError("failed while writing report file: " + path.string());
}

}  // namespace evgame
