#include "deanchor/response_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "deanchor/error.hpp"

namespace deanchor::response {

namespace {

void check_knots(const std::vector<double>& times, std::size_t n, const char* what) {
    if (times.empty()) fail(ErrorKind::Parameter, std::string(what) + " needs at least one knot");
    if (times.size() != n) fail(ErrorKind::Parameter, std::string(what) + " knot arrays differ in length");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) fail(ErrorKind::Parameter, std::string(what) + " knot times must increase");
    }
}

}  // namespace

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
    const std::size_t lo = hi - 1;
    if (x == xs[lo]) return ys[lo];
    const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + w * (ys[hi] - ys[lo]);
}

AgreementCurve::AgreementCurve(std::vector<double> times, std::vector<double> agree_right,
                               std::vector<double> agree_wrong, std::string name)
    : times_(std::move(times)), right_(std::move(agree_right)), wrong_(std::move(agree_wrong)), name_(std::move(name)) {
    check_knots(times_, right_.size(), "agreement curve");
    if (wrong_.size() != times_.size()) fail(ErrorKind::Parameter, "agreement curve knot arrays differ in length");
    for (std::size_t i = 0; i < times_.size(); ++i) {
        if (!(right_[i] >= 0.0 && right_[i] <= 1.0 && wrong_[i] >= 0.0 && wrong_[i] <= 1.0)) {
            fail(ErrorKind::Parameter, "agreement values must lie in [0, 1]");
        }
        if (i > 0 && wrong_[i] > wrong_[i - 1]) {
            fail(ErrorKind::Parameter, "p_a|w must be non-increasing in time");
        }
        if (i > 0 && right_[i] > right_[i - 1] + kMonotoneTolerance) {
            fail(ErrorKind::Parameter, "p_a|r must be non-increasing in time (tolerance 0.02)");
        }
    }
}

double AgreementCurve::agree_right(double t) const { return std::clamp(interpolate(times_, right_, t), 0.0, 1.0); }

double AgreementCurve::agree_wrong(double t) const { return std::clamp(interpolate(times_, wrong_, t), 0.0, 1.0); }

AgreementCurve default_experiment1_curve() {
    return AgreementCurve({10.0, 25.0}, {0.90, 0.90}, {1.0 - 0.48, 1.0 - 0.67}, "experiment1");
}

AgreementCurve explained_confidence_curve() {
    // 25 s knot lowered by the explained-vs-unexplained accuracy gap on
    // low-confidence AI-wrong trials (0.438 - 0.375).
    return AgreementCurve({10.0, 25.0}, {0.90, 0.90}, {1.0 - 0.48, 1.0 - 0.67 - (0.438 - 0.375)},
                          "explained_confidence");
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::Parameter, "slope needs at least two paired points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) fail(ErrorKind::Parameter, "slope is undefined for a single distinct time");
    return sxy / sxx;
}

double fitted_slope(const AgreementCurve& curve, const std::vector<double>& times) {
    std::vector<double> disagreement;
    disagreement.reserve(times.size());
    for (double t : times) disagreement.push_back(1.0 - curve.agree_wrong(t));
    return ols_slope(times, disagreement);
}

std::vector<double> isotonic_non_increasing(const std::vector<double>& values) {
    // Blocks of (sum, count); merge while a later block mean exceeds an earlier one.
    std::vector<std::pair<double, std::size_t>> blocks;
    for (double v : values) {
        blocks.emplace_back(v, 1);
        while (blocks.size() > 1) {
            const auto& b = blocks[blocks.size() - 1];
            const auto& a = blocks[blocks.size() - 2];
            if (b.first / static_cast<double>(b.second) <= a.first / static_cast<double>(a.second)) break;
            const std::pair<double, std::size_t> merged{a.first + b.first, a.second + b.second};
            blocks.pop_back();
            blocks.back() = merged;
        }
    }
    std::vector<double> out;
    out.reserve(values.size());
    for (const auto& [sum, count] : blocks) out.insert(out.end(), count, sum / static_cast<double>(count));
    return out;
}

BetaSchedule::BetaSchedule(std::vector<double> times, std::vector<double> betas, double residual)
    : times_(std::move(times)), betas_(std::move(betas)), residual_(residual) {
    check_knots(times_, betas_.size(), "beta schedule");
    for (std::size_t i = 0; i < betas_.size(); ++i) {
        if (!std::isfinite(betas_[i])) fail(ErrorKind::Parameter, "beta schedule values must be finite");
        if (i > 0 && betas_[i] > betas_[i - 1]) fail(ErrorKind::Parameter, "beta schedule must be non-increasing");
    }
}

BetaSchedule BetaSchedule::constant(double beta) { return BetaSchedule({0.0}, {beta}, 0.0); }

double BetaSchedule::at(double t) const {
    if (betas_.empty()) fail(ErrorKind::Config, "beta schedule is empty (missing calibration)");
    return interpolate(times_, betas_, t);
}

BetaSchedule calibrate_beta(const AgreementCurve& target, const CalibrationSetup& setup) {
    if (!setup.model.ai.diagonally_dominant()) {
        fail(ErrorKind::Calibration, "agreement is monotone in beta only for a diagonally dominant AI table");
    }
    if (!(setup.beta_max > setup.beta_min)) fail(ErrorKind::Parameter, "beta search range is empty");
    if (setup.trials.empty()) fail(ErrorKind::Calibration, "calibration trial source is empty");

    const auto terms = bias::AgreementTerms::build(setup.base, setup.model, setup.trials, setup.temperature);
    const double lo_value = terms.agreement_at(setup.beta_min);
    const double hi_value = terms.agreement_at(setup.beta_max);

    std::vector<double> targets, betas;
    for (double t : target.times()) {
        const double goal = setup.branch == CurveBranch::AiWrong ? target.agree_wrong(t) : target.agree_right(t);
        targets.push_back(goal);
        if (goal < lo_value - 1e-12 || goal > hi_value + 1e-12) {
            std::ostringstream msg;
            msg << "target agreement " << goal << " at t=" << t << " s is outside the achievable interval ["
                << lo_value << ", " << hi_value << "] for beta in [" << setup.beta_min << ", " << setup.beta_max
                << "]";
            fail(ErrorKind::Calibration, msg.str());
        }
        double lo = setup.beta_min, hi = setup.beta_max;
        for (int iter = 0; iter < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++iter) {
            const double mid = 0.5 * (lo + hi);
            if (terms.agreement_at(mid) < goal) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // Pick whichever bracket end lands closer to the goal.
        const double best = std::abs(terms.agreement_at(lo) - goal) <= std::abs(terms.agreement_at(hi) - goal) ? lo : hi;
        betas.push_back(best);
    }

    betas = isotonic_non_increasing(betas);
    std::vector<double> achieved;
    double ss = 0.0;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        achieved.push_back(terms.agreement_at(betas[i]));
        ss += (achieved[i] - targets[i]) * (achieved[i] - targets[i]);
    }
    BetaSchedule schedule(target.times(), betas, std::sqrt(ss / static_cast<double>(betas.size())));
    schedule.achieved = std::move(achieved);
    schedule.targets = std::move(targets);
    return schedule;
}

Json to_json(const AgreementCurve& curve) {
    Json doc = make_document("agreement_curve");
    doc["name"] = curve.name();
    doc["times"] = curve.times();
    doc["agree_right"] = curve.right_knots();
    doc["agree_wrong"] = curve.wrong_knots();
    return doc;
}

AgreementCurve agreement_curve_from_json(const Json& doc) {
    check_document(doc, "agreement_curve");
    return AgreementCurve(require_as<std::vector<double>>(doc, "times"),
                          require_as<std::vector<double>>(doc, "agree_right"),
                          require_as<std::vector<double>>(doc, "agree_wrong"),
                          value_or<std::string>(doc, "name", "custom"));
}

Json to_json(const BetaSchedule& schedule) {
    Json doc = make_document("beta_schedule");
    doc["times"] = schedule.times();
    doc["betas"] = schedule.betas();
    doc["residual"] = schedule.residual();
    if (!schedule.achieved.empty()) {
        doc["targets"] = schedule.targets;
        doc["achieved"] = schedule.achieved;
    }
    return doc;
}

BetaSchedule beta_schedule_from_json(const Json& doc) {
    check_document(doc, "beta_schedule");
    BetaSchedule s(require_as<std::vector<double>>(doc, "times"), require_as<std::vector<double>>(doc, "betas"),
                   require_as<double>(doc, "residual"));
    s.targets = value_or<std::vector<double>>(doc, "targets", {});
    s.achieved = value_or<std::vector<double>>(doc, "achieved", {});
    return s;
}

}  // namespace deanchor::response
