#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "prior/evaluation.hpp"
#include "prior/q_learning.hpp"
#include "prior/trainer.hpp"
#include "support.hpp"

using namespace prior;

namespace {

RewardTable transformed(const RewardTable& t, double a, double b) {
    RewardTable out = t;
    for (auto& v : out.values) v = a * v + b;
    return out;
}

// Independent rank oracle: rank = 1 + #smaller + (#equal - 1) / 2.
std::vector<double> rank_oracle(const std::vector<double>& v) {
    std::vector<double> r;
    for (double x : v) {
        double smaller = 0, equal = 0;
        for (double y : v) {
            smaller += y < x;
            equal += y == x;
        }
        r.push_back(1.0 + smaller + (equal - 1.0) / 2.0);
    }
    return r;
}

double correlation_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / static_cast<double>(x.size());
        my += y[i] / static_cast<double>(y.size());
    }
    double num = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        dx += (x[i] - mx) * (x[i] - mx);
        dy += (y[i] - my) * (y[i] - my);
    }
    return num / std::sqrt(dx * dy);
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("negativity") {
    for (int n : {3, 8}) {
        const auto cfg = grid::GridConfig::square(n);
        const auto r = all_negative_check(gt_reward_table(cfg));
        CHECK_FALSE(r.all_negative);
        CHECK(r.fraction == doctest::Approx((n * n - 1.0) / (n * n)));
    }
    auto rng = nn::make_rng(1, "test");
    RewardNet neg(grid::GridConfig::square(8), {16, 2, RewardMode::ForcedNegative}, rng);
    const auto nr = all_negative_check(reward_table(neg));
    CHECK(nr.all_negative);
    CHECK(nr.fraction == 1.0);
}

TEST_CASE("randomly initialised nets are negative about half the time") {
    double total = 0.0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        auto rng = nn::make_rng(static_cast<std::uint64_t>(s), "reward_init");
        RewardNet net(grid::GridConfig::square(8), {}, rng);
        const auto r = all_negative_check(reward_table(net));
        CHECK(r.all_negative == (r.fraction == 1.0));
        total += r.fraction;
    }
    CHECK(std::abs(total / seeds - 0.5) <= 0.15);
}

TEST_CASE("structure check") {
    for (int n = 2; n <= 9; ++n) {
        const auto gt = gt_reward_table(grid::GridConfig::square(n));
        CHECK(structure_check(gt).spearman == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(structure_check(transformed(gt, -1.0, 0.0)).spearman == doctest::Approx(-1.0).epsilon(1e-12));
    }

    const auto cfg = grid::GridConfig::square(4);
    auto table = gt_reward_table(cfg);
    // swap the values of (0, 0) and (2, 1)
    for (std::size_t a = 0; a < 4; ++a)
        std::swap(table.values[cfg.index({0, 0}) * 4 + a], table.values[cfg.index({2, 1}) * 4 + a]);
    std::vector<double> scores, closeness;
    for (std::size_t c = 0; c < cfg.num_cells(); ++c) {
        scores.push_back(table.cell_max(cfg.cell(c)));
        closeness.push_back(-static_cast<double>(grid::manhattan_to_goal(cfg.cell(c), cfg)));
    }
    const double oracle = correlation_oracle(rank_oracle(scores), rank_oracle(closeness));
    CHECK(oracle < 1.0);
    CHECK(structure_check(table).spearman == doctest::Approx(oracle).epsilon(1e-12));

    RewardTable flat{cfg, std::vector<double>(cfg.num_cells() * 4, -0.3)};
    const auto d = structure_check(flat);
    CHECK(d.degenerate);
    CHECK(d.spearman == 0.0);
}

TEST_CASE("epc distance") {
    const auto cfg = grid::GridConfig::square(8);
    const auto gt = gt_reward_table(cfg);
    auto epc = [&](const RewardTable& t) {
        auto rng = nn::make_rng(7, "epc");
        return epc_distance(t, 200, 14, rng);
    };
    CHECK(epc(gt) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(epc(transformed(gt, -1.0, 0.0)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(epc(transformed(gt, 2.5, -3.0))) <= 1e-9);

    auto rng = nn::make_rng(8, "test");
    for (int i = 0; i < 20; ++i) {
        RewardTable random{cfg, testing::random_vector(cfg.num_cells() * 4, rng)};
        const double base = epc(random);
        CHECK(base >= 0.0);
        CHECK(base <= 1.0);
        CHECK(std::abs(epc(transformed(random, 0.3 + i, 5.0 - i)) - base) <= 1e-9);
        CHECK(epc(transformed(random, -1.0, 0.0)) == doctest::Approx(std::sqrt(1.0 - base * base)).epsilon(1e-9));
    }

    RewardTable flat{cfg, std::vector<double>(cfg.num_cells() * 4, 0.0)};
    CHECK_THROWS_AS(epc(flat), std::domain_error);
}

TEST_CASE("epc is reproducible for a fixed stream") {
    const auto gt = gt_reward_table(grid::GridConfig::square(6));
    auto rng = nn::make_rng(9, "test");
    RewardTable t{gt.grid, testing::random_vector(gt.values.size(), rng)};
    auto a = nn::make_rng(1, "epc"), b = nn::make_rng(1, "epc");
    CHECK(epc_distance(t, 50, 10, a) == epc_distance(t, 50, 10, b));
}

TEST_CASE("goal reach") {
    for (int n : {3, 8}) {
        const auto cfg = grid::GridConfig::square(n);
        const auto gt = gt_reward_table(cfg);
        const auto reach = goal_reach_check(relabel_and_retrain_policy(gt, {}));
        CHECK(reach.reached);
        CHECK(reach.steps.value_or(0) == static_cast<std::size_t>(2 * (n - 1)));

        const auto uniform = goal_reach_check(QTable(cfg, {}));
        CHECK_FALSE(uniform.reached);
        CHECK_FALSE(uniform.steps.has_value());

        // negative everywhere and monotone in distance, as a recovered reward should be
        const auto squashed = transformed(gt, 1.0 / (4.0 * n), -0.05);
        CHECK(all_negative_check(squashed).all_negative);
        CHECK(goal_reach_check(relabel_and_retrain_policy(squashed, {})).reached);
    }
}

TEST_CASE("heatmap csv") {
    const auto cfg = grid::GridConfig::square(3);
    const auto csv = heatmap_csv(gt_reward_table(cfg));
    CHECK(csv == "-4.000000,-3.000000,-2.000000\n-3.000000,-2.000000,-1.000000\n-2.000000,-1.000000,0.000000\n");

    RewardTable tiny{cfg, std::vector<double>(36, -1e-9)};
    CHECK(heatmap_csv(tiny).find("-0.000000") == std::string::npos);

    auto rng = nn::make_rng(10, "test");
    RewardNet neg(grid::GridConfig::square(8), {16, 2, RewardMode::ForcedNegative}, rng);
    for (const auto& row : parse_heatmap_csv(heatmap_csv(reward_table(neg))))
        for (double v : row) {
            CHECK(v >= -1.0);
            CHECK(v <= 0.0);
        }

    RewardTable random{grid::GridConfig::square(5), testing::random_vector(100, rng)};
    const auto parsed = parse_heatmap_csv(heatmap_csv(random));
    REQUIRE(parsed.size() == 5);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) CHECK(std::abs(parsed[r][c] - random.cell_max({r, c})) <= 1e-6);

    const auto dir = std::filesystem::temp_directory_path() / "prior_heatmap_test";
    std::filesystem::create_directories(dir);
    heatmap_export(random, dir / "h.csv");
    std::ifstream in(dir / "h.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == heatmap_csv(random));
    std::filesystem::remove_all(dir);
    CHECK_THROWS(heatmap_export(random, "/nonexistent-dir/h.csv"));
}

TEST_CASE("report json round trip") {
    RecoveryReport r{true, 1.0, 0.93, false, 0.21, true, 14};
    auto back = recovery_report_from_json(to_json(r));
    CHECK(back.all_negative);
    CHECK(back.epc.value() == 0.21);
    CHECK(back.steps_to_goal.value() == 14);

    RecoveryReport empty;
    auto e = recovery_report_from_json(to_json(empty));
    CHECK_FALSE(e.epc.has_value());
    CHECK_FALSE(e.steps_to_goal.has_value());
}

}
