#pragma once

// Time-indexed conditional agreement curves and the anchoring-exponent
// schedule beta(t) that makes simulated agents reproduce them.

#include <string>
#include <vector>

#include "deanchor/agreement.hpp"
#include "deanchor/json_io.hpp"

namespace deanchor::response {

// p_a|r(t) = P(agree | AI right, T = t), p_a|w(t) = P(agree | AI wrong, T = t).
// Piecewise linear between knots, constant beyond the end knots.
class AgreementCurve {
public:
    static constexpr double kMonotoneTolerance = 0.02;

    AgreementCurve(std::vector<double> times, std::vector<double> agree_right, std::vector<double> agree_wrong,
                   std::string name = "custom");

    double agree_right(double t) const;
    double agree_wrong(double t) const;

    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<double>& right_knots() const noexcept { return right_; }
    const std::vector<double>& wrong_knots() const noexcept { return wrong_; }
    const std::string& name() const noexcept { return name_; }

private:
    std::vector<double> times_;
    std::vector<double> right_;
    std::vector<double> wrong_;
    std::string name_;
};

// Piecewise-linear interpolation with constant extrapolation. Knot times
// must be strictly increasing.
double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x);

// Probe disagreement 48% at 10 s rising to 67% at 25 s; unmodified-trial
// disagreement flat near 10%.
AgreementCurve default_experiment1_curve();

// The explained-confidence scenario: stronger de-anchoring at 25 s.
AgreementCurve explained_confidence_curve();

// OLS slope of disagreement (1 - p_a|w) against time, sampled at `times`.
double fitted_slope(const AgreementCurve& curve, const std::vector<double>& times = {10, 15, 20, 25});

// OLS slope of y on x. Throws Parameter when x has a single distinct value.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

// Non-increasing least-squares projection (pool adjacent violators).
std::vector<double> isotonic_non_increasing(const std::vector<double>& values);

class BetaSchedule {
public:
    BetaSchedule() = default;
    BetaSchedule(std::vector<double> times, std::vector<double> betas, double residual);

    static BetaSchedule constant(double beta);

    double at(double t) const;

    const std::vector<double>& times() const noexcept { return times_; }
    const std::vector<double>& betas() const noexcept { return betas_; }
    double residual() const noexcept { return residual_; }

    // Per-knot agreement reached by the fitted betas (diagnostics).
    std::vector<double> achieved;
    std::vector<double> targets;

private:
    std::vector<double> times_;
    std::vector<double> betas_;
    double residual_ = 0.0;
};

enum class CurveBranch { AiWrong, AiRight };

struct CalibrationSetup {
    bias::BiasProfile base;             // alpha, gamma, tie rule; beta is searched
    bias::SubjectiveModel model;
    double temperature = 1.0;
    std::vector<bias::WeightedObservation> trials;  // calibration trial source
    double beta_min = 0.0;
    double beta_max = 50.0;
    CurveBranch branch = CurveBranch::AiWrong;
};

// For each knot, bisects the monotone map beta -> agreement to hit the
// target, then projects the schedule onto non-increasing sequences.
// Throws Calibration when a target is outside [agreement(beta_min),
// agreement(beta_max)] or when the AI table is not diagonally dominant.
BetaSchedule calibrate_beta(const AgreementCurve& target, const CalibrationSetup& setup);

Json to_json(const AgreementCurve& curve);
AgreementCurve agreement_curve_from_json(const Json& doc);
Json to_json(const BetaSchedule& schedule);
BetaSchedule beta_schedule_from_json(const Json& doc);

}  // namespace deanchor::response
