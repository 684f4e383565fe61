// Command-line front end: scenario generation, payoff-tensor builds,
// equilibrium solving, and report emission as reproducible pipeline steps.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "evgame/errors.hpp"
#include "evgame/metrics.hpp"
#include "evgame/outer_game.hpp"
#include "evgame/payoff_tensor.hpp"
#include "evgame/scenario.hpp"
#include "json.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitIo = 4;

using namespace evgame;

GenerationConfig config_from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("config: malformed JSON: ") + e.what());
    }
    try {
        GenerationConfig cfg;
        cfg.horizon_slots = j.at("horizon_slots").get<int>();
        cfg.slot_hours = j.at("slot_hours").get<double>();
        cfg.efficiency = j.at("efficiency").get<double>();
        cfg.phi = j.at("phi_cents_per_kwh2").get<double>();
        cfg.delta = j.at("delta_cents_per_kwh").get<double>();
        cfg.base_load_kwh = j.at("base_load_kwh").get<std::vector<double>>();
        for (const auto& jc : j.at("catalog")) {
            cfg.catalog.push_back({jc.at("model").get<std::string>(), jc.at("max_rate_kw").get<double>(),
                                   jc.at("capacity_kwh").get<double>()});
        }
        for (const auto& ja : j.at("aggregators")) {
            AggregatorSpec spec;
            spec.ev_counts = ja.at("ev_counts").get<std::vector<int>>();
            if (ja.contains("pinned_min_slots")) spec.pinned_min_slots = ja.at("pinned_min_slots").get<int>();
            cfg.aggregators.push_back(std::move(spec));
        }
        if (j.contains("weight_min")) cfg.weight_min = j.at("weight_min").get<int>();
        if (j.contains("weight_max")) cfg.weight_max = j.at("weight_max").get<int>();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("config: missing or mistyped field: ") + e.what());
    }
}

std::vector<double> parse_alpha(const std::string& text, int n) {
    std::vector<double> alphas;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            alphas.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("--alpha: cannot parse '" + item + "'");
        }
    }
    if (alphas.size() == 1) alphas.assign(n, alphas[0]);
    if (static_cast<int>(alphas.size()) != n) {
        throw ConfigError("--alpha expects one value or one per aggregator (" + std::to_string(n) + ")");
    }
    return alphas;
}

void print_start_slot_sets(const Scenario& sc) {
    std::cout << "start-slot strategy sets:\n";
    for (const auto& agg : sc.aggregators) {
        std::cout << "  aggregator " << agg.id << ": {1.." << agg.latest_start(sc.horizon_slots)
                  << "}  (min_slots " << agg.min_slots << ")\n";
    }
}

Scenario load_and_validate(const std::filesystem::path& path) {
    Scenario sc = load_scenario(path);
    ValidationReport report = validate(sc);
    if (!report.ok()) {
        std::ostringstream ss;
        ss << "scenario " << path.string() << " is invalid:";
        for (const auto& issue : report.issues) ss << "\n  " << issue.location << ": " << issue.message;
        throw ConfigError(ss.str());
    }
    return sc;
}

struct SolveArgs {
    std::string model = "eut";
    std::string alpha = "1.0";
    double beta = 0.7;
    std::optional<double> eps_target;
    int max_iters = 100000;
};

OuterSolution run_solve(const PayoffTensor& tensor, const BehaviorModel& model, const SolveArgs& args) {
    OuterOptions opt;
    opt.beta = args.beta;
    opt.max_iters = args.max_iters;
    opt.eps_target = args.eps_target;
    return iterate_to_equilibrium(tensor, uniform_strategies(tensor), model, opt);
}

int run(int argc, char** argv) {
    CLI::App app{"Two-stage EV-charging game: scenario generation, subgame payoff tensors, "
                 "epsilon-Nash start-time equilibria, and savings/PAR reports"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a scenario file from a preset or config");
    std::string gen_preset, gen_config, gen_out = "scenario.json";
    std::uint64_t gen_seed = 0;
    gen->add_option("--preset", gen_preset, "Built-in preset name (paper-default)");
    gen->add_option("--config", gen_config, "Generation config JSON file");
    gen->add_option("--seed", gen_seed, "RNG seed")->required();
    gen->add_option("--out", gen_out, "Output scenario path");

    // validate
    auto* val = app.add_subcommand("validate", "Validate a scenario file against all invariants");
    std::string val_scenario;
    val->add_option("--scenario", val_scenario, "Scenario file")->required();

    // tensor
    auto* ten = app.add_subcommand("tensor", "Build (or resume) the subgame payoff tensor");
    std::string ten_scenario, ten_cache = "tensor.evpt";
    int ten_workers = 1, ten_max_sweeps = 500;
    double ten_eps_alg = 1e-6;
    ten->add_option("--scenario", ten_scenario, "Scenario file")->required();
    ten->add_option("--cache", ten_cache, "Tensor cache path");
    ten->add_option("--workers", ten_workers, "Parallel subgame workers");
    ten->add_option("--eps-alg", ten_eps_alg, "Inner-game termination tolerance");
    ten->add_option("--max-sweeps", ten_max_sweeps, "Inner-game sweep cap");

    // solve
    auto* sol = app.add_subcommand("solve", "Solve the start-time game on a complete tensor");
    std::string sol_scenario, sol_cache, sol_out = "solution.json", sol_sweep_out = "alpha_sweep.tsv";
    std::string sol_alpha_sweep;
    SolveArgs sargs;
    double sol_eps_target = -1.0;
    sol->add_option("--scenario", sol_scenario, "Scenario file")->required();
    sol->add_option("--cache", sol_cache, "Tensor cache path")->required();
    sol->add_option("--model", sargs.model, "Behavior model: eut or pt")
        ->check(CLI::IsMember({"eut", "pt"}));
    sol->add_option("--alpha", sargs.alpha, "PT weighting exponent (scalar or csv per aggregator)");
    sol->add_option("--beta", sargs.beta, "Inertia weight in (0,1)");
    sol->add_option("--eps-target", sol_eps_target, "Absolute epsilon target (default: 1e-3 x median |F|)");
    sol->add_option("--max-iters", sargs.max_iters, "Iteration cap");
    sol->add_option("--out", sol_out, "Solution output path");
    sol->add_option("--alpha-sweep", sol_alpha_sweep,
                    "Sweep spec lo:hi:step; emits one row per alpha instead of a solution file");
    sol->add_option("--sweep-out", sol_sweep_out, "Sweep table output path");
    std::string sol_trajectory;
    sol->add_option("--trajectory", sol_trajectory,
                    "Write per-iteration epsilon and strategies to this TSV (convergence plots)");

    // report
    auto* rep = app.add_subcommand("report", "Emit savings and expected-load tables");
    std::string rep_scenario, rep_cache, rep_outdir = ".";
    std::vector<std::string> rep_solutions;
    rep->add_option("--scenario", rep_scenario, "Scenario file")->required();
    rep->add_option("--cache", rep_cache, "Tensor cache path")->required();
    rep->add_option("--solution", rep_solutions, "Solution file (repeatable)")->required();
    rep->add_option("--out-dir", rep_outdir, "Directory for the emitted tables");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        GenerationConfig cfg;
        if (!gen_preset.empty() && !gen_config.empty()) {
            throw ConfigError("generate: pass either --preset or --config, not both");
        }
        if (!gen_preset.empty()) {
            if (gen_preset != "paper-default") throw ConfigError("unknown preset '" + gen_preset + "'");
            cfg = paper_default_config();
        } else if (!gen_config.empty()) {
            cfg = config_from_json_file(gen_config);
        } else {
            throw ConfigError("generate: --preset or --config required");
        }
        Scenario sc = generate_instance(cfg, gen_seed);
        save_scenario(sc, gen_out);
        std::cout << "wrote " << gen_out << " (digest " << sc.digest() << ")\n";
        print_start_slot_sets(sc);
        return kExitOk;
    }

    if (val->parsed()) {
        Scenario sc = load_scenario(val_scenario);
        ValidationReport report = validate(sc);
        if (report.ok()) {
            std::cout << "scenario is valid (digest " << sc.digest() << ")\n";
            return kExitOk;
        }
        for (const auto& issue : report.issues) {
            std::cout << issue.location << ": " << issue.message << "\n";
        }
        std::cout << report.issues.size() << " violation(s)\n";
        return kExitValidation;
    }

    if (ten->parsed()) {
        Scenario sc = load_and_validate(ten_scenario);
        BuildOptions opt;
        opt.workers = ten_workers;
        opt.subgame.eps_alg = ten_eps_alg;
        opt.subgame.max_sweeps = ten_max_sweeps;
        opt.cache_path = std::filesystem::path(ten_cache);
        std::uint64_t total = PayoffTensor::empty_for(sc).size();
        std::uint64_t report_every = std::max<std::uint64_t>(total / 20, 1);
        opt.progress = [&](std::uint64_t done, std::uint64_t k) {
            if (done % report_every == 0 || done == k) {
                std::cout << "\r" << done << " / " << k << " subgames" << std::flush;
            }
        };
        auto t0 = std::chrono::steady_clock::now();
        PayoffTensor tensor = build_tensor(sc, opt);
        auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "\r" << tensor.completed_count() << " / " << tensor.size() << " subgames ("
                  << secs << " s)\n";
        if (!tensor.complete()) {
            std::cout << "tensor INCOMPLETE; " << tensor.failed_ranks().size()
                      << " subgames failed certification:\n";
            for (std::uint64_t r : tensor.failed_ranks()) {
                std::cout << "  rank " << r << "\n";
            }
            throw ConvergenceError("tensor build left uncertified entries");
        }
        cache_store(tensor, ten_cache);
        std::cout << "wrote " << ten_cache << " (tensor digest " << tensor.content_digest() << ")\n";
        return kExitOk;
    }

    if (sol->parsed()) {
        Scenario sc = load_and_validate(sol_scenario);
        PayoffTensor tensor = cache_load(sol_cache, sc);
        if (sol_eps_target >= 0.0) sargs.eps_target = sol_eps_target;

        if (!sol_alpha_sweep.empty()) {
            double lo, hi, step;
            if (std::sscanf(sol_alpha_sweep.c_str(), "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0.0 ||
                !(lo > 0.0) || lo > hi || hi > 1.0) {
                throw ConfigError("--alpha-sweep expects lo:hi:step with 0 < lo <= hi <= 1 and step > 0");
            }
            BaselineResult baseline = uncoordinated_baseline(sc);
            SubgameProfileCache cache(sc, tensor);
            std::ofstream out(sol_sweep_out);
            if (!out) throw IoError("cannot write sweep table: " + sol_sweep_out);
            out << "# scenario_digest: " << sc.digest() << "\n";
            out << "# tensor_digest: " << tensor.content_digest() << "\n";
            out << "alpha\tepsilon\titerations\treached_target\tavg_saving_pct\tpar_reduction_pct\n";
            for (double alpha = lo; alpha <= hi + 1e-12; alpha += step) {
                double a = std::min(alpha, 1.0);
                SolveArgs row = sargs;
                OuterSolution solution =
                    run_solve(tensor, BehaviorModel::pt(std::vector<double>(sc.num_aggregators(), a)), row);
                ExpectedOutcome outcome = expected_outcome(sc, tensor, solution, cache);
                SavingsReport rep2 = savings_report(baseline, outcome);
                double avg = 0.0;
                for (double s : rep2.saving_pct) avg += s;
                avg /= rep2.saving_pct.size();
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%.6g\t%.12g\t%d\t%d\t%.12g\t%.12g\n", a,
                              solution.epsilon, solution.iterations, solution.reached_target ? 1 : 0,
                              avg, rep2.par_reduction_pct);
                out << buf;
                std::cout << "alpha " << a << ": eps " << solution.epsilon << " in "
                          << solution.iterations << " iters, PAR reduction " << rep2.par_reduction_pct
                          << "%\n";
            }
            std::cout << "wrote " << sol_sweep_out << "\n";
            return kExitOk;
        }

        BehaviorModel model = sargs.model == "eut"
                                  ? BehaviorModel::eut()
                                  : BehaviorModel::pt(parse_alpha(sargs.alpha, sc.num_aggregators()));
        OuterOptions oopt;
        oopt.beta = sargs.beta;
        oopt.max_iters = sargs.max_iters;
        oopt.eps_target = sargs.eps_target;
        oopt.record_trajectory = !sol_trajectory.empty();
        OuterSolution solution = iterate_to_equilibrium(tensor, uniform_strategies(tensor), model, oopt);
        if (!sol_trajectory.empty()) {
            std::ofstream traj(sol_trajectory);
            if (!traj) throw IoError("cannot write trajectory file: " + sol_trajectory);
            traj << "# scenario_digest: " << sc.digest() << "\n";
            traj << "# tensor_digest: " << tensor.content_digest() << "\n";
            traj << "iteration\tepsilon";
            for (int i = 0; i < sc.num_aggregators(); ++i) {
                for (int t = 1; t <= tensor.dims()[i]; ++t) traj << "\ta" << (i + 1) << "(" << t << ")";
            }
            traj << "\n";
            for (const auto& point : solution.trajectory) {
                traj << point.iteration << "\t" << point.epsilon;
                for (const auto& s : point.strategies) {
                    for (double p : s.probs) {
                        char num[32];
                        std::snprintf(num, sizeof(num), "%.12g", p);
                        traj << "\t" << num;
                    }
                }
                traj << "\n";
            }
            std::cout << "wrote " << sol_trajectory << " (" << solution.trajectory.size() << " rows)\n";
        }
        save_solution(solution, sol_out);
        std::cout << "model " << model.descriptor() << ": certified epsilon " << solution.epsilon
                  << " (target " << solution.eps_target << ") after " << solution.iterations
                  << " iterations\n";
        for (std::size_t i = 0; i < solution.strategies.size(); ++i) {
            const auto& p = solution.strategies[i].probs;
            int mode = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
            std::cout << "  aggregator " << (i + 1) << ": modal start slot " << (mode + 1)
                      << " (p=" << p[mode] << ")\n";
        }
        std::cout << "wrote " << sol_out << "\n";
        if (!solution.reached_target) {
            std::cout << "epsilon target not reached within " << sargs.max_iters << " iterations\n";
            return kExitConvergence;
        }
        return kExitOk;
    }

    if (rep->parsed()) {
        Scenario sc = load_and_validate(rep_scenario);
        PayoffTensor tensor = cache_load(rep_cache, sc);
        BaselineResult baseline = uncoordinated_baseline(sc);
        SubgameProfileCache cache(sc, tensor);

        std::vector<OuterSolution> solutions;
        std::vector<ExpectedOutcome> outcomes;
        solutions.reserve(rep_solutions.size());
        outcomes.reserve(rep_solutions.size());
        for (const auto& path : rep_solutions) {
            solutions.push_back(load_solution(path));
            outcomes.push_back(expected_outcome(sc, tensor, solutions.back(), cache));
        }
        std::vector<LabeledOutcome> labeled;
        for (std::size_t s = 0; s < solutions.size(); ++s) {
            labeled.push_back({solutions[s].model.descriptor(), &outcomes[s], solution_digest(solutions[s])});
        }
        std::filesystem::path dir(rep_outdir);
        std::filesystem::create_directories(dir);
        write_savings_table(dir / "savings.tsv", sc, baseline, labeled);
        write_expected_load_table(dir / "expected_load.tsv", sc, baseline, labeled);
        write_slot1_load_table(dir / "slot1_load.tsv", sc, labeled);
        std::cout << "wrote " << (dir / "savings.tsv") << ", " << (dir / "expected_load.tsv") << ", "
                  << (dir / "slot1_load.tsv") << "\n";
        return kExitOk;
    }

    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
