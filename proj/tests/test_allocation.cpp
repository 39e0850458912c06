#include <doctest.h>

#include <cmath>

#include "deanchor/allocation.hpp"
#include "deanchor/error.hpp"

using namespace deanchor;
using namespace deanchor::alloc;

namespace {

RewardCurves demo_curves() {
    const std::vector<double> grid = {5, 10, 15, 20, 25, 30, 40};
    return {RewardCurve(grid, {0.36, 0.40, 0.44, 0.48, 0.52, 0.56, 0.60}),
            RewardCurve(grid, {0.91, 0.90, 0.89, 0.88, 0.87, 0.86, 0.85})};
}

// Random curves with a rising low bin and a falling high bin on a random grid.
RewardCurves random_monotone_curves(Rng& rng) {
    std::vector<double> grid;
    double t = rng.uniform() * 5;
    const int points = 2 + static_cast<int>(rng.below(8));
    for (int i = 0; i < points; ++i) {
        grid.push_back(t);
        t += 1 + rng.uniform() * 15;
    }
    std::vector<double> low, high;
    double l = rng.uniform() * 0.6, h = 0.4 + rng.uniform() * 0.6;
    for (int i = 0; i < points; ++i) {
        low.push_back(l);
        high.push_back(h);
        l = std::min(1.0, l + rng.uniform() * 0.1);
        h = std::max(0.0, h - rng.uniform() * 0.1);
    }
    return {RewardCurve(grid, low), RewardCurve(grid, high)};
}

}  // namespace

TEST_CASE("expected reward arithmetic") {
    CHECK(expected_reward(1.0, 0.9, 0.3) == doctest::Approx(0.9));
    CHECK(expected_reward(0.5, 1.0, 1.0) == doctest::Approx(0.5));
    CHECK(std::abs(expected_reward(0.7, 0.9, 0.4) - 0.81) < 1e-15);
    // four joint outcomes: (correct, agree), (correct, disagree), (wrong, agree), (wrong, disagree)
    const double p = 0.7, ar = 0.9, aw = 0.4;
    const double joint = p * ar * 1 + p * (1 - ar) * 0 + (1 - p) * aw * 0 + (1 - p) * (1 - aw) * 1;
    CHECK(std::abs(expected_reward(p, ar, aw) - joint) < 1e-15);
    CHECK_THROWS_AS(expected_reward(1.2, 0.5, 0.5), Error);
}

TEST_CASE("expected reward along the experiment-1 curve") {
    const auto c = response::default_experiment1_curve();
    CHECK(std::abs(expected_reward_given_time(10, c, 0.85) - (0.90 * 0.85 + (1 - 0.52) * 0.15)) < 1e-12);
    CHECK(std::abs(expected_reward_given_time(10, c, 0.85) - 0.837) < 1e-12);
    CHECK(std::abs(expected_reward_given_time(25, c, 0.85) - 0.8655) < 1e-12);
    for (double t : {0.0, 12.0, 30.0}) CHECK(expected_reward_given_time(t, c, 1.0) == doctest::Approx(0.9));
}

TEST_CASE("two-level confidence allocation") {
    const auto [t_low, t_high] = solve_confidence_allocation(TimeBudget::per_trial(17.5, 40, 10), 0.5);
    CHECK(t_low == 25.0);
    CHECK(t_high == 10.0);
    CHECK(std::abs(0.5 * t_low + 0.5 * t_high - 17.5) < 1e-12);

    const auto flat = solve_confidence_allocation(TimeBudget::per_trial(17.5, 40, 17.5), 0.3);
    CHECK(flat.first == doctest::Approx(17.5));
    CHECK(flat.second == 17.5);

    CHECK(solve_confidence_allocation(TimeBudget::per_trial(17.5, 40, 10), 0.25).first == doctest::Approx(40.0));
}

TEST_CASE("allocation errors") {
    try {
        solve_confidence_allocation(TimeBudget::per_trial(17.5, 40, 10), 0.0);
        FAIL("expected a budget error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Budget);
        CHECK(std::string(e.what()).find("degenerate") != std::string::npos);
    }
    try {
        solve_confidence_allocation(TimeBudget::per_trial(17.5, 40, 10, 30.0), 0.25);
        FAIL("expected a cap error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Budget);
        CHECK(std::string(e.what()).find("t_min") != std::string::npos);
    }
    CHECK_THROWS_AS(TimeBudget(0, 40, 0), Error);
    CHECK_THROWS_AS(TimeBudget::per_trial(17.5, 40, 20), Error);
    const auto budget = TimeBudget::per_trial(17.5, 40, 10);
    CHECK_THROWS_AS(team_reward(AllocationPolicy::constant(20), ConfidenceSplit(0.5), demo_curves(), budget), Error);
}

TEST_CASE("monotonicity checks on the grid") {
    RewardCurves ok{RewardCurve({10, 15, 20}, {0.6, 0.65, 0.7}), RewardCurve({10, 20}, {0.8, 0.75})};
    CHECK(check_assumption1(ok).holds);
    RewardCurves bad{RewardCurve({10, 20}, {0.6, 0.55}), RewardCurve({10, 20}, {0.8, 0.75})};
    const auto r = check_assumption1(bad);
    CHECK_FALSE(r.holds);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].bin == "low");
    CHECK(r.violations[0].t1 == 10);
    CHECK(r.violations[0].t2 == 20);
    CHECK(check_assumption1(bad, 0.06).holds);
}

TEST_CASE("experiment-1 derived curves are evaluated per bin") {
    const auto c = response::default_experiment1_curve();
    const std::vector<double> grid = {10, 15, 20, 25};
    const auto curves = reward_curves_from_agreement(c, 0.45, 0.75, grid);
    for (double t : grid) {
        CHECK(curves.low.at(t) == doctest::Approx(expected_reward_given_time(t, c, 0.45)));
        CHECK(curves.high.at(t) == doctest::Approx(expected_reward_given_time(t, c, 0.75)));
    }
    // Disagreement on AI-wrong trials rises with time, so both bins
    // improve: the high bin breaks the monotonicity condition.
    const auto report = check_assumption1(curves);
    CHECK_FALSE(report.holds);
    for (const auto& v : report.violations) CHECK(v.bin == "high");
}

TEST_CASE("policy rewards") {
    const auto curves = demo_curves();
    const auto budget = TimeBudget::per_trial(17.5, 40, 10);
    const ConfidenceSplit split(0.5);
    const double constant = team_reward(AllocationPolicy::constant(17.5), split, curves, budget);
    CHECK(constant == doctest::Approx(0.5 * curves.low.at(17.5) + 0.5 * curves.high.at(17.5)));

    const RewardCurves flat{RewardCurve({0, 50}, {0.6, 0.6}), RewardCurve({0, 50}, {0.8, 0.8})};
    const auto cmp = compare_policies(split, flat, budget);
    CHECK(cmp.ranked[0].reward == doctest::Approx(cmp.ranked[1].reward).epsilon(1e-15));
    CHECK(cmp.ranked[1].reward == doctest::Approx(cmp.ranked[2].reward).epsilon(1e-15));

    const auto demo = compare_policies(split, curves, budget);
    CHECK(demo.assumption1.holds);
    CHECK(demo.confidence_dominates);
    CHECK(demo.ranked[0].kind == PolicyKind::ConfidenceBased);
}

TEST_CASE("a non-monotone low bin can invert the ordering") {
    // Low bin gets worse with time: extra seconds there hurt.
    const std::vector<double> grid = {10, 25};
    const RewardCurves curves{RewardCurve(grid, {0.6, 0.4}), RewardCurve(grid, {0.7, 0.9})};
    const auto cmp = compare_policies(ConfidenceSplit(0.5), curves, TimeBudget::per_trial(17.5, 40, 10));
    CHECK_FALSE(cmp.assumption1.holds);
    CHECK_FALSE(cmp.confidence_dominates);
    CHECK(cmp.ranked.back().kind == PolicyKind::ConfidenceBased);
}

TEST_CASE("confidence allocation dominates over random configurations") {
    Rng rng(20210521);
    int violations = 0, configs = 0;
    while (configs < 1000) {
        const auto curves = random_monotone_curves(rng);
        if (!check_assumption1(curves).holds) continue;
        const double p = 0.05 + 0.9 * rng.uniform();
        const double mean = 5 + 30 * rng.uniform();
        const auto budget = TimeBudget::per_trial(mean, 40, mean * rng.uniform());
        const auto cmp = compare_policies(ConfidenceSplit(p), curves, budget);
        double conf = 0, constant = 0, random = 0;
        for (const auto& r : cmp.ranked) {
            if (r.kind == PolicyKind::ConfidenceBased) conf = r.reward;
            if (r.kind == PolicyKind::Constant) constant = r.reward;
            if (r.kind == PolicyKind::Random) random = r.reward;
        }
        if (conf < constant - 1e-12 || conf < random - 1e-12) ++violations;
        ++configs;
    }
    CHECK(violations == 0);
}

TEST_CASE("two-level optimality by grid search") {
    Rng rng(99);
    for (int k = 0; k < 200; ++k) {
        const auto curves = random_monotone_curves(rng);
        const double p = 0.05 + 0.9 * rng.uniform();
        const double mean = 10 + 20 * rng.uniform();
        const auto budget = TimeBudget::per_trial(mean, 40, 0.5 * mean * rng.uniform());
        const auto [t_low, t_high] = solve_confidence_allocation(budget, p);
        const double solved = team_reward(AllocationPolicy::confidence(t_low, t_high), ConfidenceSplit(p), curves, budget);
        const auto best = grid_search_two_level(ConfidenceSplit(p), curves, budget, 0.5);
        CHECK(solved >= best.reward - 1e-12);
    }
}

TEST_CASE("budget identity for every policy") {
    Rng rng(7);
    for (int k = 0; k < 200; ++k) {
        const double p = 0.05 + 0.9 * rng.uniform();
        const double mean = 5 + 30 * rng.uniform();
        const auto budget = TimeBudget::per_trial(mean, 40, mean * rng.uniform());
        const auto [t_low, t_high] = solve_confidence_allocation(budget, p);
        const ConfidenceSplit split(p);
        CHECK(std::abs(AllocationPolicy::confidence(t_low, t_high).expected_time(split) - mean) < 1e-9);
        CHECK(std::abs(AllocationPolicy::random(t_low, t_high).expected_time(split) - mean) < 1e-9);
        CHECK(std::abs(AllocationPolicy::constant(mean).expected_time(split) - mean) < 1e-9);
    }
    // Full random assignments fix round(N p) long slots.
    Rng draw(3);
    const auto times = random_assignment(AllocationPolicy::random(25, 10), 8, 0.5, draw);
    CHECK(std::count(times.begin(), times.end(), 25.0) == 4);
    double sum = 0;
    for (double t : times) sum += t;
    CHECK(sum / 8 == 17.5);
}

TEST_CASE("analytic rewards agree with simulation") {
    const auto curves = demo_curves();
    const auto budget = TimeBudget::per_trial(17.5, 40, 10);
    const ConfidenceSplit split(0.5);
    for (const auto& policy : {AllocationPolicy::constant(17.5), AllocationPolicy::random(25, 10),
                               AllocationPolicy::confidence(25, 10), AllocationPolicy::confidence(25, 10, true)}) {
        const double analytic = team_reward(policy, split, curves, budget);
        const auto sim = simulate_team_reward(policy, split, curves, 1000000, 17);
        CHECK(std::abs(sim.value - analytic) < 3 * sim.std_error);
    }
}

TEST_CASE("conditional accuracy decomposition") {
    CHECK(std::abs(decompose_conditional_accuracy(0.9, 0.6, 0.75) - 0.825) < 1e-15);
    CHECK(decompose_conditional_accuracy(0.8, 0.3, 1.0) == doctest::Approx(0.8));
    const auto c = response::default_experiment1_curve();
    for (double t : {10.0, 17.0, 25.0}) {
        CHECK(decompose_conditional_accuracy(c.agree_right(t), 1 - c.agree_wrong(t), 0.45) ==
              doctest::Approx(expected_reward_given_time(t, c, 0.45)));
    }
}

TEST_CASE("policy comparison renders as JSON and text") {
    const auto cmp = compare_policies(ConfidenceSplit(0.5), demo_curves(), TimeBudget::per_trial(17.5, 40, 10));
    const auto j = to_json(cmp);
    CHECK(j["ranked"].size() == 3);
    CHECK(j["ranked"][0]["policy"] == "confidence");
    const auto text = to_text(cmp);
    CHECK(text.find("confidence") != std::string::npos);
    CHECK(text.find("constant") != std::string::npos);
    const auto budget = time_budget_from_json(to_json(cmp.budget));
    CHECK(budget.total == cmp.budget.total);
    CHECK(budget.trials == cmp.budget.trials);
}
