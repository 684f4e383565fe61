#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "evgame/errors.hpp"
#include "evgame/outer_game.hpp"
#include "test_helpers.hpp"

using namespace evgame;
using namespace evgame::testing;

namespace {

// dims {2,2} with hand-set payoffs F1 = [[-1,-2],[-3,-4]] and F2 = F1^T.
PayoffTensor make_2x2_tensor(Scenario* out_scenario = nullptr) {
    Scenario sc = make_toy_scenario();
    PayoffTensor tensor = PayoffTensor::empty_for(sc);
    const double f1[2][2] = {{-1.0, -2.0}, {-3.0, -4.0}};
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            TensorEntry e;
            e.payoffs = {f1[a][b], f1[b][a]};
            e.iterations = 1;
            e.residual = 0.0;
            e.br_gap = 0.0;
            e.present = true;
            tensor.set_entry(tensor.rank_of(StartProfile{{a + 1, b + 1}}), std::move(e));
        }
    }
    if (out_scenario) *out_scenario = sc;
    return tensor;
}

std::vector<MixedStrategy> strat(std::vector<std::vector<double>> probs) {
    std::vector<MixedStrategy> out;
    for (auto& p : probs) out.push_back(MixedStrategy{std::move(p)});
    return out;
}

}  // namespace

TEST_CASE("prelec weighting") {
    SUBCASE("alpha = 1 is the exact identity") {
        for (double p : {0.0, 0.1, 0.25, 0.5, 1.0 / 3.0, 0.999, 1.0}) {
            CHECK(prelec_weight(p, 1.0) == p);
        }
    }
    SUBCASE("endpoints") {
        CHECK(prelec_weight(1.0, 0.4) == 1.0);
        CHECK(prelec_weight(0.0, 0.4) == 0.0);
    }
    SUBCASE("hand value at p = 0.5, alpha = 0.1") {
        CHECK(prelec_weight(0.5, 0.1) == doctest::Approx(0.3814).epsilon(2e-4));
    }
    SUBCASE("fixed point at 1/e for random alphas") {
        std::mt19937 eng(5);
        std::uniform_real_distribution<double> ua(0.01, 1.0);
        const double inv_e = std::exp(-1.0);
        for (int k = 0; k < 20; ++k) {
            double alpha = ua(eng);
            CHECK(prelec_weight(inv_e, alpha) == doctest::Approx(inv_e).epsilon(1e-12));
        }
    }
    SUBCASE("strictly increasing on (0,1]") {
        for (double alpha : {0.1, 0.35, 0.7}) {
            double prev = prelec_weight(0.001, alpha);
            for (int k = 1; k <= 100; ++k) {
                double w = prelec_weight(0.001 + k * 0.00999, alpha);
                CHECK(w > prev);
                prev = w;
            }
        }
    }
    SUBCASE("overweights small, underweights large probabilities") {
        CHECK(prelec_weight(0.01, 0.5) > 0.01);
        CHECK(prelec_weight(0.9, 0.5) < 0.9);
    }
    SUBCASE("domain violations") {
        CHECK_THROWS_AS(prelec_weight(-0.1, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(prelec_weight(1.1, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(prelec_weight(0.5, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(prelec_weight(0.5, 1.5), std::invalid_argument);
    }
}

TEST_CASE("expected payoffs on the 2x2 tensor") {
    PayoffTensor tensor = make_2x2_tensor();
    auto uniform = strat({{0.5, 0.5}, {0.5, 0.5}});

    SUBCASE("EUT hand value") {
        CHECK(expected_payoff(tensor, uniform, BehaviorModel::eut(), 0) ==
              doctest::Approx(-2.5).epsilon(1e-14));
    }
    SUBCASE("degenerate strategies return the pure payoff under both models") {
        auto pure = strat({{0.0, 1.0}, {1.0, 0.0}});  // sigma = (2,1)
        CHECK(expected_payoff(tensor, pure, BehaviorModel::eut(), 0) == doctest::Approx(-3.0));
        CHECK(expected_payoff(tensor, pure, BehaviorModel::pt({0.3, 0.3}), 0) == doctest::Approx(-3.0));
        CHECK(expected_payoff(tensor, pure, BehaviorModel::eut(), 1) == doctest::Approx(-2.0));
    }
    SUBCASE("PT with alpha = 1 equals EUT on random strategies") {
        std::mt19937 eng(17);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 25; ++trial) {
            double p = u(eng), q = u(eng);
            auto a = strat({{p, 1.0 - p}, {q, 1.0 - q}});
            for (int i = 0; i < 2; ++i) {
                CHECK(expected_payoff(tensor, a, BehaviorModel::pt({1.0, 1.0}), i) ==
                      expected_payoff(tensor, a, BehaviorModel::eut(), i));
            }
        }
    }
    SUBCASE("pure-strategy payoff hand value") {
        CHECK(pure_strategy_payoff(tensor, 1, uniform, BehaviorModel::eut(), 0) ==
              doctest::Approx(-1.5).epsilon(1e-14));
    }
    SUBCASE("own-probability decomposition under both models") {
        std::mt19937 eng(31);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 25; ++trial) {
            double p = u(eng), q = u(eng);
            auto a = strat({{p, 1.0 - p}, {q, 1.0 - q}});
            for (const auto& model : {BehaviorModel::eut(), BehaviorModel::pt({0.4, 0.8})}) {
                for (int i = 0; i < 2; ++i) {
                    double direct = expected_payoff(tensor, a, model, i);
                    double composed = 0.0;
                    for (int t = 1; t <= 2; ++t) {
                        composed += a[i].probs[t - 1] * pure_strategy_payoff(tensor, t, a, model, i);
                    }
                    CHECK(std::abs(direct - composed) <= 1e-12 * std::max(1.0, std::abs(direct)));
                }
            }
        }
    }
    SUBCASE("against degenerate opponents q equals the tensor value") {
        auto a = strat({{0.5, 0.5}, {0.0, 1.0}});
        CHECK(pure_strategy_payoff(tensor, 2, a, BehaviorModel::pt({0.2, 0.2}), 0) ==
              doctest::Approx(-4.0).epsilon(1e-14));
    }
}

TEST_CASE("best reply vertex and ties") {
    PayoffTensor tensor = make_2x2_tensor();
    auto uniform = strat({{0.5, 0.5}, {0.5, 0.5}});
    SUBCASE("dominant slot") {
        MixedStrategy z = best_reply_vertex(tensor, uniform, BehaviorModel::eut(), 0);
        CHECK(z.probs[0] == 1.0);  // q = (-1.5, -3.5), slot 1 dominates
        CHECK(z.probs[1] == 0.0);
    }
    SUBCASE("exact ties break toward the smallest slot") {
        // Single player, five start slots, payoff tie between slots 2 and 5.
        Scenario sc;
        sc.horizon_slots = 5;
        sc.slot_hours = 1.0;
        sc.grid.base_load_kwh.assign(5, 1.0);
        sc.grid.phi.assign(5, 0.2);
        sc.grid.delta.assign(5, 0.2);
        sc.aggregators.push_back(make_aggregator(1, {make_ev(2.0, 2.0, 0.0)}, 1.0, 5.0, 5, 1.0));
        PayoffTensor t5 = PayoffTensor::empty_for(sc);
        REQUIRE(t5.size() == 5);
        std::vector<double> f = {-4.0, -2.0, -3.0, -5.0, -2.0};
        for (int s = 1; s <= 5; ++s) {
            TensorEntry e;
            e.payoffs = {f[s - 1]};
            e.present = true;
            t5.set_entry(t5.rank_of(StartProfile{{s}}), std::move(e));
        }
        MixedStrategy z = best_reply_vertex(t5, strat({{0.2, 0.2, 0.2, 0.2, 0.2}}),
                                            BehaviorModel::eut(), 0);
        CHECK(z.probs[1] == 1.0);  // slot 2, not slot 5
    }
}

TEST_CASE("epsilon certificate on the 2x2 tensor") {
    PayoffTensor tensor = make_2x2_tensor();
    SUBCASE("uniform strategies leave a gap of exactly 1") {
        auto uniform = strat({{0.5, 0.5}, {0.5, 0.5}});
        CHECK(epsilon_certificate(tensor, uniform, BehaviorModel::eut()) ==
              doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("the strict pure equilibrium has epsilon 0") {
        auto vertex = strat({{1.0, 0.0}, {1.0, 0.0}});
        CHECK(epsilon_certificate(tensor, vertex, BehaviorModel::eut()) == 0.0);
    }
}

TEST_CASE("iteration on the 2x2 tensor") {
    PayoffTensor tensor = make_2x2_tensor();

    SUBCASE("a strict pure equilibrium is a fixed point") {
        OuterOptions opt;
        opt.eps_target = 0.0;
        OuterSolution sol =
            iterate_to_equilibrium(tensor, strat({{1.0, 0.0}, {1.0, 0.0}}), BehaviorModel::eut(), opt);
        CHECK(sol.reached_target);
        CHECK(sol.iterations == 0);
        CHECK(sol.epsilon == 0.0);
        CHECK(sol.strategies[0].probs[0] == 1.0);
    }
    SUBCASE("from uniform it converges to the dominant profile") {
        OuterOptions opt;
        opt.eps_target = 1e-3;
        OuterSolution sol =
            iterate_to_equilibrium(tensor, uniform_strategies(tensor), BehaviorModel::eut(), opt);
        CHECK(sol.reached_target);
        CHECK(sol.strategies[0].probs[0] > 0.99);
        CHECK(sol.strategies[1].probs[0] > 0.99);
        CHECK(sol.epsilon <= 1e-3);
    }
    SUBCASE("strategies stay on the simplex at every iterate") {
        OuterOptions opt;
        opt.eps_target = 1e-3;
        opt.record_trajectory = true;
        OuterSolution sol =
            iterate_to_equilibrium(tensor, uniform_strategies(tensor), BehaviorModel::pt({0.5, 0.5}), opt);
        REQUIRE(!sol.trajectory.empty());
        for (const auto& point : sol.trajectory) {
            for (const auto& s : point.strategies) {
                double sum = 0.0;
                for (double v : s.probs) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                    sum += v;
                }
                CHECK(std::abs(sum - 1.0) <= 1e-12);
            }
        }
    }
    SUBCASE("max_iters exhaustion reports instead of throwing") {
        OuterOptions opt;
        opt.eps_target = 0.0;  // unattainable from uniform in finite steps
        opt.max_iters = 50;
        OuterSolution sol =
            iterate_to_equilibrium(tensor, uniform_strategies(tensor), BehaviorModel::eut(), opt);
        CHECK(!sol.reached_target);
        CHECK(sol.iterations == 50);
        CHECK(sol.epsilon > 0.0);
    }
}

TEST_CASE("solution file round trip") {
    PayoffTensor tensor = make_2x2_tensor();
    OuterOptions opt;
    opt.eps_target = 1e-4;
    OuterSolution sol =
        iterate_to_equilibrium(tensor, uniform_strategies(tensor), BehaviorModel::pt({0.7, 0.7}), opt);
    auto path = std::filesystem::temp_directory_path() / "evgame_test_solution.json";
    save_solution(sol, path);
    OuterSolution loaded = load_solution(path);
    CHECK(loaded.epsilon == sol.epsilon);
    CHECK(loaded.iterations == sol.iterations);
    CHECK(loaded.scenario_digest == sol.scenario_digest);
    CHECK(loaded.tensor_digest == sol.tensor_digest);
    CHECK(loaded.model.kind == BehaviorModel::Kind::Pt);
    REQUIRE(loaded.strategies.size() == sol.strategies.size());
    for (std::size_t i = 0; i < loaded.strategies.size(); ++i) {
        for (std::size_t t = 0; t < loaded.strategies[i].probs.size(); ++t) {
            CHECK(loaded.strategies[i].probs[t] == sol.strategies[i].probs[t]);
        }
    }
    CHECK(solution_digest(loaded) == solution_digest(sol));
    std::filesystem::remove(path);
}

TEST_CASE("input validation") {
    PayoffTensor tensor = make_2x2_tensor();
    auto uniform = strat({{0.5, 0.5}, {0.5, 0.5}});
    CHECK_THROWS_AS(expected_payoff(tensor, uniform, BehaviorModel::pt({0.5}), 0), ConfigError);
    CHECK_THROWS_AS(expected_payoff(tensor, uniform, BehaviorModel::pt({0.5, 1.5}), 0), ConfigError);
    CHECK_THROWS_AS(expected_payoff(tensor, strat({{0.7, 0.7}, {0.5, 0.5}}), BehaviorModel::eut(), 0),
                    ConfigError);
    CHECK_THROWS_AS(pure_strategy_payoff(tensor, 3, uniform, BehaviorModel::eut(), 0),
                    std::invalid_argument);

    Scenario sc = make_toy_scenario();
    PayoffTensor incomplete = PayoffTensor::empty_for(sc);
    CHECK_THROWS_AS(expected_payoff(incomplete, uniform, BehaviorModel::eut(), 0), ConfigError);
}
