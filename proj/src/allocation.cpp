#include "deanchor/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "deanchor/error.hpp"

namespace deanchor::alloc {

namespace {

constexpr double kBudgetTolerance = 1e-9;
constexpr double kDominanceSlack = 1e-12;

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
        std::ostringstream msg;
        msg << name << " must lie in [0, 1], got " << p;
        fail(ErrorKind::Parameter, msg.str());
    }
}

}  // namespace

TimeBudget::TimeBudget(double total_, int trials_, double t_min_, std::optional<double> t_cap_)
    : total(total_), trials(trials_), t_min(t_min_), t_cap(t_cap_) {
    if (!(total > 0.0)) fail(ErrorKind::Budget, "total time must be positive");
    if (trials < 1) fail(ErrorKind::Budget, "trial count must be at least 1");
    if (!(t_min >= 0.0 && t_min <= mean() + kBudgetTolerance)) {
        fail(ErrorKind::Budget, "t_min must lie in [0, T/N]");
    }
    if (t_cap && *t_cap < mean()) fail(ErrorKind::Budget, "t_cap must be at least T/N");
}

TimeBudget TimeBudget::per_trial(double seconds, int trials, double t_min, std::optional<double> t_cap) {
    return TimeBudget(seconds * trials, trials, t_min, t_cap);
}

RewardCurve::RewardCurve(std::vector<double> times, std::vector<double> values)
    : times_(std::move(times)), values_(std::move(values)) {
    if (times_.empty() || times_.size() != values_.size()) {
        fail(ErrorKind::Parameter, "reward curve needs matching, nonempty time and value grids");
    }
    for (std::size_t i = 0; i < times_.size(); ++i) {
        if (i > 0 && !(times_[i] > times_[i - 1])) fail(ErrorKind::Parameter, "reward curve times must increase");
        check_probability(values_[i], "reward curve value");
    }
}

double RewardCurve::at(double t) const { return response::interpolate(times_, values_, t); }

ConfidenceSplit::ConfidenceSplit(double p) : p_low(p) { check_probability(p, "p_low"); }

const char* to_string(PolicyKind k) noexcept {
    switch (k) {
        case PolicyKind::HumanOnly: return "human_only";
        case PolicyKind::Constant: return "constant";
        case PolicyKind::Random: return "random";
        case PolicyKind::ConfidenceBased: return "confidence";
        case PolicyKind::ConfidenceBasedExplained: return "confidence_explained";
    }
    return "?";
}

PolicyKind policy_kind_from_string(const std::string& name) {
    for (auto k : {PolicyKind::HumanOnly, PolicyKind::Constant, PolicyKind::Random, PolicyKind::ConfidenceBased,
                   PolicyKind::ConfidenceBasedExplained}) {
        if (name == to_string(k)) return k;
    }
    fail(ErrorKind::Config, "unknown group '" + name + "'");
}

AllocationPolicy AllocationPolicy::constant(double seconds) { return {PolicyKind::Constant, seconds, seconds}; }

AllocationPolicy AllocationPolicy::random(double t_low, double t_high) { return {PolicyKind::Random, t_low, t_high}; }

AllocationPolicy AllocationPolicy::confidence(double t_low, double t_high, bool explained) {
    return {explained ? PolicyKind::ConfidenceBasedExplained : PolicyKind::ConfidenceBased, t_low, t_high};
}

double AllocationPolicy::expected_time(const ConfidenceSplit& split) const {
    // Random and confidence policies put t_low on a p_low fraction of trials.
    return split.p_low * t_low + (1.0 - split.p_low) * t_high;
}

double expected_reward(double p_ai_correct, double p_agree_right, double p_agree_wrong) {
    check_probability(p_ai_correct, "p_ai_correct");
    check_probability(p_agree_right, "p_agree_right");
    check_probability(p_agree_wrong, "p_agree_wrong");
    return p_agree_right * p_ai_correct + (1.0 - p_agree_wrong) * (1.0 - p_ai_correct);
}

double expected_reward_given_time(double t, const response::AgreementCurve& curve, double p_ai_correct) {
    if (!(t >= 0.0)) fail(ErrorKind::Parameter, "time must be nonnegative");
    return expected_reward(p_ai_correct, curve.agree_right(t), curve.agree_wrong(t));
}

RewardCurves reward_curves_from_agreement(const response::AgreementCurve& curve, double p_ai_low, double p_ai_high,
                                          const std::vector<double>& grid) {
    std::vector<double> low, high;
    for (double t : grid) {
        low.push_back(expected_reward_given_time(t, curve, p_ai_low));
        high.push_back(expected_reward_given_time(t, curve, p_ai_high));
    }
    return {RewardCurve(grid, low), RewardCurve(grid, high)};
}

double team_reward(const AllocationPolicy& policy, const ConfidenceSplit& split, const RewardCurves& curves,
                   const TimeBudget& budget) {
    const double p = split.p_low;
    const double spent = policy.expected_time(split);
    if (std::abs(spent - budget.mean()) > kBudgetTolerance) {
        std::ostringstream msg;
        msg << std::setprecision(17) << to_string(policy.kind) << " policy violates the budget identity p_L*t_L + (1-p_L)*t_H = T/N: "
            << p << "*" << policy.t_low << " + " << (1.0 - p) << "*" << policy.t_high << " = " << spent
            << " != " << budget.mean();
        fail(ErrorKind::Budget, msg.str());
    }
    switch (policy.kind) {
        case PolicyKind::Constant:
            return p * curves.low.at(policy.t_low) + (1.0 - p) * curves.high.at(policy.t_low);
        case PolicyKind::Random:
            // Time is drawn independently of the bin: four-term mixture.
            return p * (p * curves.low.at(policy.t_low) + (1.0 - p) * curves.low.at(policy.t_high)) +
                   (1.0 - p) * (p * curves.high.at(policy.t_low) + (1.0 - p) * curves.high.at(policy.t_high));
        case PolicyKind::ConfidenceBased:
        case PolicyKind::ConfidenceBasedExplained:
            return p * curves.low.at(policy.t_low) + (1.0 - p) * curves.high.at(policy.t_high);
        case PolicyKind::HumanOnly:
            break;
    }
    fail(ErrorKind::Parameter, "team reward is undefined for the human_only group");
}

std::pair<double, double> solve_confidence_allocation(const TimeBudget& budget, double p_low) {
    check_probability(p_low, "p_low");
    if (p_low == 0.0) {
        fail(ErrorKind::Budget, "degenerate split: p_L = 0 leaves no low-confidence trials to absorb the budget slack");
    }
    const double mean = budget.mean();
    const double t_high = budget.t_min;
    const double t_low = (mean - budget.t_min * (1.0 - p_low)) / p_low;
    if (budget.t_cap && t_low > *budget.t_cap) {
        const double feasible_t_min = p_low < 1.0 ? (mean - p_low * *budget.t_cap) / (1.0 - p_low) : mean;
        std::ostringstream msg;
        msg << "t_L = " << t_low << " s exceeds t_cap = " << *budget.t_cap << " s; raise t_min to at least "
            << feasible_t_min << " s";
        fail(ErrorKind::Budget, msg.str());
    }
    return {t_low, t_high};
}

Assumption1Report check_assumption1(const RewardCurves& curves, double tolerance) {
    Assumption1Report report;
    report.tolerance = tolerance;
    auto scan = [&](const RewardCurve& c, const char* bin, bool increasing) {
        const auto& t = c.times();
        const auto& v = c.values();
        for (std::size_t i = 0; i < t.size(); ++i) {
            for (std::size_t j = i + 1; j < t.size(); ++j) {
                const bool bad = increasing ? v[j] < v[i] - tolerance : v[j] > v[i] + tolerance;
                if (bad) report.violations.push_back({bin, t[i], t[j], v[i], v[j]});
            }
        }
    };
    scan(curves.low, "low", true);
    scan(curves.high, "high", false);
    report.holds = report.violations.empty();
    return report;
}

PolicyComparison compare_policies(const ConfidenceSplit& split, const RewardCurves& curves, const TimeBudget& budget) {
    PolicyComparison cmp;
    cmp.budget = budget;
    cmp.p_low = split.p_low;
    cmp.assumption1 = check_assumption1(curves);

    const auto [t_low, t_high] = solve_confidence_allocation(budget, split.p_low);
    const auto conf = AllocationPolicy::confidence(t_low, t_high);
    const auto constant = AllocationPolicy::constant(budget.mean());
    const auto random = AllocationPolicy::random(t_low, t_high);
    for (const auto& policy : {conf, constant, random}) {
        cmp.ranked.push_back({policy.kind, policy.t_low, policy.t_high, team_reward(policy, split, curves, budget)});
    }
    cmp.confidence_dominates = cmp.ranked[0].reward >= std::max(cmp.ranked[1].reward, cmp.ranked[2].reward) - kDominanceSlack;
    // Stable: ties keep the confidence policy first.
    std::stable_sort(cmp.ranked.begin(), cmp.ranked.end(),
                     [](const PolicyResult& a, const PolicyResult& b) { return a.reward > b.reward + kDominanceSlack; });
    return cmp;
}

PolicyResult grid_search_two_level(const ConfidenceSplit& split, const RewardCurves& curves, const TimeBudget& budget,
                                   double step) {
    if (!(step > 0.0)) fail(ErrorKind::Parameter, "grid step must be positive");
    const double p = split.p_low;
    PolicyResult best{PolicyKind::ConfidenceBased, 0.0, 0.0, -1.0};
    // t_H' from t_min up to T/N; beyond that t_L' < t_H', which only
    // mirrors the policy onto the wrong bins.
    const int steps = static_cast<int>(std::floor((budget.mean() - budget.t_min) / step + 1e-9));
    for (int k = 0; k <= steps; ++k) {
        const double t_high = budget.t_min + k * step;
        const double t_low = p > 0.0 ? (budget.mean() - (1.0 - p) * t_high) / p : t_high;
        if (budget.t_cap && t_low > *budget.t_cap) continue;
        const auto policy = AllocationPolicy::confidence(t_low, t_high);
        const double r = team_reward(policy, split, curves, budget);
        if (r > best.reward) best = {policy.kind, t_low, t_high, r};
    }
    return best;
}

double decompose_conditional_accuracy(double p_agree_given_correct, double p_disagree_given_wrong,
                                      double p_ai_correct) {
    check_probability(p_agree_given_correct, "P(agree | AI correct)");
    check_probability(p_disagree_given_wrong, "P(disagree | AI wrong)");
    check_probability(p_ai_correct, "P(AI correct)");
    return p_agree_given_correct * p_ai_correct + p_disagree_given_wrong * (1.0 - p_ai_correct);
}

std::vector<double> random_assignment(const AllocationPolicy& policy, int n, double p_low, Rng& rng) {
    const int n_low = static_cast<int>(std::lround(n * p_low));
    std::vector<double> times(static_cast<std::size_t>(n), policy.t_high);
    std::fill_n(times.begin(), n_low, policy.t_low);
    rng.shuffle(std::span<double>(times));
    return times;
}

RewardEstimate simulate_team_reward(const AllocationPolicy& policy, const ConfidenceSplit& split,
                                    const RewardCurves& curves, std::size_t trials, std::uint64_t seed) {
    if (trials < 2) fail(ErrorKind::Parameter, "simulation needs at least two trials");
    Rng rng(seed);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < trials; ++i) {
        const bool low = rng.bernoulli(split.p_low);
        double t = policy.t_low;
        switch (policy.kind) {
            case PolicyKind::Constant: t = policy.t_low; break;
            case PolicyKind::Random: t = rng.bernoulli(split.p_low) ? policy.t_low : policy.t_high; break;
            case PolicyKind::ConfidenceBased:
            case PolicyKind::ConfidenceBasedExplained: t = low ? policy.t_low : policy.t_high; break;
            case PolicyKind::HumanOnly: fail(ErrorKind::Parameter, "team reward is undefined for the human_only group");
        }
        const double p = low ? curves.low.at(t) : curves.high.at(t);
        if (rng.bernoulli(p)) ++correct;
    }
    const double n = static_cast<double>(trials);
    const double m = static_cast<double>(correct) / n;
    return {m, std::sqrt(m * (1.0 - m) / n)};
}

Json to_json(const TimeBudget& budget) {
    Json j;
    j["total"] = budget.total;
    j["trials"] = budget.trials;
    j["t_min"] = budget.t_min;
    j["t_cap"] = budget.t_cap ? Json(*budget.t_cap) : Json(nullptr);
    return j;
}

TimeBudget time_budget_from_json(const Json& j) {
    const int trials = require_as<int>(j, "trials");
    std::optional<double> cap;
    if (j.contains("t_cap") && !j["t_cap"].is_null()) cap = j["t_cap"].get<double>();
    const double t_min = require_as<double>(j, "t_min");
    if (j.contains("per_trial")) return TimeBudget::per_trial(j["per_trial"].get<double>(), trials, t_min, cap);
    return TimeBudget(require_as<double>(j, "total"), trials, t_min, cap);
}

Json to_json(const RewardCurves& curves) {
    Json j;
    j["low"] = {{"times", curves.low.times()}, {"values", curves.low.values()}};
    j["high"] = {{"times", curves.high.times()}, {"values", curves.high.values()}};
    return j;
}

RewardCurves reward_curves_from_json(const Json& j) {
    auto curve = [&](const char* key) {
        const Json& c = require(j, key);
        return RewardCurve(require_as<std::vector<double>>(c, "times"), require_as<std::vector<double>>(c, "values"));
    };
    return {curve("low"), curve("high")};
}

Json to_json(const PolicyComparison& cmp) {
    Json doc = make_document("policy_comparison");
    doc["budget"] = to_json(cmp.budget);
    doc["p_low"] = cmp.p_low;
    Json ranked = Json::array();
    for (const auto& r : cmp.ranked) {
        ranked.push_back({{"policy", to_string(r.kind)}, {"t_low", r.t_low}, {"t_high", r.t_high}, {"reward", r.reward}});
    }
    doc["ranked"] = ranked;
    doc["confidence_dominates"] = cmp.confidence_dominates;
    Json a1;
    a1["holds"] = cmp.assumption1.holds;
    a1["tolerance"] = cmp.assumption1.tolerance;
    a1["checked_on"] = "grid";
    Json v = Json::array();
    for (const auto& x : cmp.assumption1.violations) {
        v.push_back({{"bin", x.bin}, {"t1", x.t1}, {"t2", x.t2}, {"v1", x.v1}, {"v2", x.v2}});
    }
    a1["violations"] = v;
    doc["assumption1"] = a1;
    return doc;
}

std::string to_text(const PolicyComparison& cmp) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6);
    out << "T/N = " << cmp.budget.mean() << " s, t_min = " << cmp.budget.t_min << " s, p_L = " << cmp.p_low << "\n";
    out << std::left << std::setw(22) << "policy" << std::right << std::setw(12) << "t_low" << std::setw(12)
        << "t_high" << std::setw(12) << "reward" << "\n";
    for (const auto& r : cmp.ranked) {
        out << std::left << std::setw(22) << to_string(r.kind) << std::right << std::setw(12) << r.t_low
            << std::setw(12) << r.t_high << std::setw(12) << r.reward << "\n";
    }
    out << "assumption 1 (grid): " << (cmp.assumption1.holds ? "holds" : "violated") << "\n";
    for (const auto& v : cmp.assumption1.violations) {
        out << "  " << v.bin << ": t=" << v.t1 << " -> " << v.v1 << ", t=" << v.t2 << " -> " << v.v2 << "\n";
    }
    out << "confidence-based dominates: " << (cmp.confidence_dominates ? "yes" : "no") << "\n";
    return out.str();
}

}  // namespace deanchor::alloc
