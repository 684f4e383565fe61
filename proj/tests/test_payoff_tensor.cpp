#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "evgame/errors.hpp"
#include "evgame/payoff_tensor.hpp"
#include "oracle.hpp"
#include "test_helpers.hpp"

using namespace evgame;
using namespace evgame::testing;

TEST_CASE("profile enumeration") {
    SUBCASE("lexicographic product for dims {2,3}") {
        Scenario sc;
        sc.horizon_slots = 4;
        sc.slot_hours = 1.0;
        sc.grid.base_load_kwh.assign(4, 1.0);
        sc.grid.phi.assign(4, 0.2);
        sc.grid.delta.assign(4, 0.2);
        sc.aggregators.push_back(make_aggregator(1, {make_ev(2.0, 6.0, 0.0)}, 1.0, 5.0, 4, 1.0));  // tau 3
        sc.aggregators.push_back(make_aggregator(2, {make_ev(2.0, 4.0, 0.0)}, 1.0, 5.0, 4, 1.0));  // tau 2
        auto profiles = enumerate_profiles(sc);
        REQUIRE(profiles.size() == 6);
        CHECK(profiles[0].starts == std::vector<int>{1, 1});
        CHECK(profiles[1].starts == std::vector<int>{1, 2});
        CHECK(profiles[2].starts == std::vector<int>{1, 3});
        CHECK(profiles[3].starts == std::vector<int>{2, 1});
        CHECK(profiles[5].starts == std::vector<int>{2, 3});

        PayoffTensor shape = PayoffTensor::empty_for(sc);
        for (std::uint64_t k = 0; k < shape.size(); ++k) {
            CHECK(shape.rank_of(profiles[k]) == k);
        }
    }
    SUBCASE("paper-default product is 5*7*10*8*11 = 30800") {
        Scenario sc = generate_instance(paper_default_config(), 42);
        CHECK(PayoffTensor::empty_for(sc).size() == 30800);
    }
    SUBCASE("single aggregator with one start slot") {
        Scenario sc = make_toy_scenario();
        sc.aggregators.pop_back();
        sc.aggregators[0].evs[0] = make_ev(1.0, 2.0, 0.0);  // needs both slots
        sc.aggregators[0].min_slots = 2;
        auto profiles = enumerate_profiles(sc);
        REQUIRE(profiles.size() == 1);
        CHECK(profiles[0].starts == std::vector<int>{1});
    }
}

TEST_CASE("toy tensor payoffs match the joint grid oracle") {
    Scenario sc = make_toy_scenario();
    PayoffTensor tensor = build_tensor(sc);
    REQUIRE(tensor.complete());
    REQUIRE(tensor.size() == 4);  // both aggregators may start at slot 1 or 2

    SUBCASE("all payoffs are non-positive") {
        for (std::uint64_t k = 0; k < tensor.size(); ++k) {
            for (double f : tensor.entry(k).payoffs) CHECK(f <= 0.0);
        }
    }
    SUBCASE("sigma = (1,1) against the oracle") {
        JointGame2x2 game;
        game.budget = {2.0, 2.0};
        game.ub = {2.0, 2.0};
        game.base = {0.0, 0.0};
        game.phi = {1.0, 1.0};
        game.delta = {0.0, 0.0};
        game.weight = {{0.0, 0.0}, {0.0, 0.0}};
        game.target = {{0.0, 0.0}, {0.0, 0.0}};
        auto points = joint_grid_nash_2x2(game, 0.01);
        REQUIRE(!points.empty());
        std::uint64_t rank = tensor.rank_of(StartProfile{{1, 1}});
        const auto& entry = tensor.entry(rank);
        bool matched = false;
        for (const auto& p : points) {
            if (std::abs(-p.cost_p0 - entry.payoffs[0]) <= 0.05 &&
                std::abs(-p.cost_p1 - entry.payoffs[1]) <= 0.05) {
                matched = true;
            }
        }
        CHECK(matched);
        // the exact equilibrium (1,1)/(1,1) is on the grid
        bool has_center = false;
        for (const auto& p : points) {
            if (std::abs(p.x1_p0 - 1.0) < 1e-9 && std::abs(p.x1_p1 - 1.0) < 1e-9) has_center = true;
        }
        CHECK(has_center);
    }
    SUBCASE("every entry carries a certified gap") {
        for (std::uint64_t k = 0; k < tensor.size(); ++k) {
            const auto& e = tensor.entry(k);
            CHECK(e.br_gap >= 0.0);
            CHECK(e.br_gap <= 1e-6 * std::max(1.0, std::abs(e.payoffs[0])));
        }
    }
}

TEST_CASE("worker count does not change the tensor") {
    Scenario sc = make_mini_scenario();
    PayoffTensor one = build_tensor(sc);
    BuildOptions opt;
    opt.workers = 4;
    PayoffTensor four = build_tensor(sc, opt);
    CHECK(bit_identical(one, four));
}

TEST_CASE("cache round trip and resume") {
    Scenario sc = make_mini_scenario();
    auto dir = std::filesystem::temp_directory_path();
    auto path = dir / "evgame_test_tensor.evpt";
    std::filesystem::remove(path);

    BuildOptions opt;
    opt.cache_path = path;
    PayoffTensor tensor = build_tensor(sc, opt);
    REQUIRE(tensor.complete());
    cache_store(tensor, path);

    SUBCASE("store -> load is bit identical") {
        PayoffTensor loaded = cache_load(path, sc);
        CHECK(bit_identical(tensor, loaded));
    }
    SUBCASE("digest mismatch is rejected") {
        Scenario other = make_mini_scenario();
        other.seed = 999;  // digest differs
        CHECK_THROWS_AS(cache_load(path, other), IoError);
    }
    SUBCASE("corrupt tail is rejected by the strict loader") {
        auto corrupt = dir / "evgame_test_tensor_corrupt.evpt";
        std::filesystem::copy_file(path, corrupt, std::filesystem::copy_options::overwrite_existing);
        std::ofstream app(corrupt, std::ios::binary | std::ios::app);
        app.write("xx", 2);
        app.close();
        CHECK_THROWS_AS(cache_load(corrupt, sc), IoError);
        std::filesystem::remove(corrupt);
    }
    SUBCASE("format version mismatch is rejected") {
        auto other = dir / "evgame_test_tensor_version.evpt";
        std::filesystem::copy_file(path, other, std::filesystem::copy_options::overwrite_existing);
        std::fstream f(other, std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(8);  // u32 format version follows the 8-byte magic
        char v2[4] = {2, 0, 0, 0};
        f.write(v2, 4);
        f.close();
        CHECK_THROWS_AS(cache_load(other, sc), IoError);
        std::filesystem::remove(other);
    }
    SUBCASE("partial cache resume completes only the missing entries") {
        // Keep the header and the first 5 records.
        std::uint64_t header_size = std::filesystem::file_size(path) - tensor.size() * (10 * 2 + 20);
        std::filesystem::resize_file(path, header_size + 5 * (10 * 2 + 20));
        BuildOptions resume;
        resume.cache_path = path;
        std::uint64_t solves = 0;
        resume.progress = [&](std::uint64_t, std::uint64_t) { ++solves; };
        PayoffTensor resumed = build_tensor(sc, resume);
        CHECK(solves == tensor.size() - 5);
        CHECK(bit_identical(tensor, resumed));
        // The appended file holds all records again.
        PayoffTensor reloaded = cache_load(path, sc);
        CHECK(bit_identical(tensor, reloaded));
    }
    std::filesystem::remove(path);
}

TEST_CASE("a later forced start weakly hurts while others sit at slot 1") {
    Scenario sc = generate_instance(paper_default_config(), 42);
    std::vector<int> base_starts(5, 1);
    SubgameSolution base = solve_subgame(sc, base_starts);
    REQUIRE(base.certified);
    for (int i = 0; i < 5; ++i) {
        std::vector<int> shifted = base_starts;
        shifted[i] = sc.aggregators[i].latest_start(sc.horizon_slots);
        SubgameSolution moved = solve_subgame(sc, shifted);
        REQUIRE(moved.certified);
        CHECK(moved.payoffs[i] <= base.payoffs[i] + 1e-9);
    }
}
