#pragma once

// Expected team reward under time allocation, the two-level confidence
// allocator, its monotonicity precondition, and the baseline policies.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "deanchor/json_io.hpp"
#include "deanchor/response_model.hpp"
#include "deanchor/rng.hpp"

namespace deanchor::alloc {

struct TimeBudget {
    double total = 0.0;  // seconds, T
    int trials = 1;      // N
    double t_min = 0.0;
    std::optional<double> t_cap;

    TimeBudget() = default;
    TimeBudget(double total, int trials, double t_min, std::optional<double> t_cap = std::nullopt);

    // Budget with T = per_trial * N.
    static TimeBudget per_trial(double seconds, int trials, double t_min, std::optional<double> t_cap = std::nullopt);

    double mean() const noexcept { return total / trials; }
};

// Reward (expected accuracy) as a function of allocated time, on a grid
// with linear interpolation and constant extrapolation.
class RewardCurve {
public:
    RewardCurve() = default;
    RewardCurve(std::vector<double> times, std::vector<double> values);

    double at(double t) const;
    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<double>& values() const noexcept { return values_; }

private:
    std::vector<double> times_;
    std::vector<double> values_;
};

struct RewardCurves {
    RewardCurve low;   // E[R | C_L, T = t]
    RewardCurve high;  // E[R | C_H, T = t]
};

struct ConfidenceSplit {
    double p_low = 0.5;  // P(C in C_L)

    explicit ConfidenceSplit(double p = 0.5);
};

enum class PolicyKind { HumanOnly, Constant, Random, ConfidenceBased, ConfidenceBasedExplained };

const char* to_string(PolicyKind k) noexcept;
PolicyKind policy_kind_from_string(const std::string& name);

struct AllocationPolicy {
    PolicyKind kind = PolicyKind::Constant;
    double t_low = 0.0;   // time on C_L trials (confidence) or the long level (random)
    double t_high = 0.0;  // time on C_H trials (confidence) or the short level (random)

    static AllocationPolicy constant(double seconds);
    // Random: each trial gets t_low with probability p_low, else t_high,
    // independent of confidence.
    static AllocationPolicy random(double t_low, double t_high);
    static AllocationPolicy confidence(double t_low, double t_high, bool explained = false);

    // Expected seconds per trial under the split.
    double expected_time(const ConfidenceSplit& split) const;
};

// p_a|r * p_ai + (1 - p_a|w) * (1 - p_ai).
double expected_reward(double p_ai_correct, double p_agree_right, double p_agree_wrong);

double expected_reward_given_time(double t, const response::AgreementCurve& curve, double p_ai_correct);

// Per-bin reward curves on a time grid, from an agreement curve and the
// bin-conditional AI accuracies.
RewardCurves reward_curves_from_agreement(const response::AgreementCurve& curve, double p_ai_low, double p_ai_high,
                                          const std::vector<double>& grid);

// Analytic expected per-trial accuracy. Throws Budget when the policy's
// expected time differs from budget.mean() by more than 1e-9.
double team_reward(const AllocationPolicy& policy, const ConfidenceSplit& split, const RewardCurves& curves,
                   const TimeBudget& budget);

// t_H = t_min, t_L = (T/N - t_min (1 - p_L)) / p_L.
std::pair<double, double> solve_confidence_allocation(const TimeBudget& budget, double p_low);

struct Assumption1Violation {
    std::string bin;  // "low" or "high"
    double t1 = 0.0, t2 = 0.0;
    double v1 = 0.0, v2 = 0.0;
};

struct Assumption1Report {
    bool holds = true;
    double tolerance = 0.0;
    std::vector<Assumption1Violation> violations;
};

// Low-bin curve non-decreasing and high-bin curve non-increasing over
// every grid pair t1 < t2.
Assumption1Report check_assumption1(const RewardCurves& curves, double tolerance = 0.0);

struct PolicyResult {
    PolicyKind kind;
    double t_low = 0.0;
    double t_high = 0.0;
    double reward = 0.0;
};

struct PolicyComparison {
    TimeBudget budget;
    double p_low = 0.0;
    std::vector<PolicyResult> ranked;  // best first
    Assumption1Report assumption1;
    bool confidence_dominates = false;  // confidence >= max(constant, random) - 1e-12
};

PolicyComparison compare_policies(const ConfidenceSplit& split, const RewardCurves& curves, const TimeBudget& budget);

// Best budget-feasible two-level (t_L', t_H') with t_H' >= t_min, scanning
// t_H' at the given step.
PolicyResult grid_search_two_level(const ConfidenceSplit& split, const RewardCurves& curves, const TimeBudget& budget,
                                   double step = 0.5);

// P(agree|correct) P(correct) + P(disagree|wrong) (1 - P(correct)).
double decompose_conditional_accuracy(double p_agree_given_correct, double p_disagree_given_wrong,
                                      double p_ai_correct);

// Exactly round(n * p_low) of n slots get t_low, shuffled.
std::vector<double> random_assignment(const AllocationPolicy& policy, int n, double p_low, Rng& rng);

struct RewardEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// Simulated per-trial accuracy: bin ~ Bernoulli(p_low), time per policy,
// correct ~ Bernoulli(curve(bin, time)).
RewardEstimate simulate_team_reward(const AllocationPolicy& policy, const ConfidenceSplit& split,
                                    const RewardCurves& curves, std::size_t trials, std::uint64_t seed);

Json to_json(const TimeBudget& budget);
TimeBudget time_budget_from_json(const Json& j);
Json to_json(const RewardCurves& curves);
RewardCurves reward_curves_from_json(const Json& j);
Json to_json(const PolicyComparison& cmp);
std::string to_text(const PolicyComparison& cmp);

}  // namespace deanchor::alloc
