#include <doctest.h>

#include <cmath>

#include "deanchor/error.hpp"
#include "deanchor/response_model.hpp"
#include "support.hpp"

using namespace deanchor;
using namespace deanchor::response;
namespace ts = testing_support;

namespace {

bias::SubjectiveModel small_model() {
    bias::SubjectiveModel m;
    m.prior = bias::LabelPrior(0.55);
    m.likelihood = bias::FeatureLikelihoodTable(
        {{"a", {0, 1}, {{0.7, 0.3}, {0.3, 0.7}}}, {"b", {0, 1, 2}, {{0.5, 0.2}, {0.3, 0.3}, {0.2, 0.5}}}}, 0.0);
    m.ai = bias::AiOutputTable::from_accuracy(0.85);
    return m;
}

// AI-wrong style trials: the shown prediction opposes the evidence.
std::vector<bias::WeightedObservation> small_trials() {
    std::vector<bias::WeightedObservation> out;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 3; ++b) {
            const int evidence_says = a + b >= 2 ? 1 : 0;
            out.push_back({{{a, b}, 1 - evidence_says}, 1.0 / 6.0});
        }
    }
    return out;
}

CalibrationSetup small_setup() {
    CalibrationSetup s;
    s.model = small_model();
    s.temperature = 0.5;
    s.trials = small_trials();
    return s;
}

}  // namespace

TEST_CASE("default experiment-1 curve knots") {
    const auto c = default_experiment1_curve();
    CHECK(c.agree_wrong(10) == 0.52);
    CHECK(c.agree_wrong(25) == 1.0 - 0.67);
    CHECK(c.agree_wrong(17.5) == doctest::Approx(0.425).epsilon(1e-12));
    CHECK(c.agree_right(10) == 0.90);
    CHECK(c.agree_right(25) == 0.90);
    // constant extrapolation
    CHECK(c.agree_wrong(5) == 0.52);
    CHECK(c.agree_wrong(40) == 1.0 - 0.67);
}

TEST_CASE("explained curve lowers late agreement on AI-wrong trials") {
    const auto e = explained_confidence_curve();
    const auto d = default_experiment1_curve();
    CHECK(e.agree_wrong(10) == d.agree_wrong(10));
    CHECK(e.agree_wrong(25) < d.agree_wrong(25));
}

TEST_CASE("curve invariants are enforced") {
    CHECK_THROWS_AS(AgreementCurve({10, 25}, {0.9, 0.9}, {0.3, 0.5}), Error);   // p_a|w rising
    CHECK_THROWS_AS(AgreementCurve({10, 25}, {0.8, 0.9}, {0.5, 0.3}), Error);   // p_a|r rising beyond 0.02
    CHECK_NOTHROW(AgreementCurve({10, 25}, {0.89, 0.9}, {0.5, 0.3}));           // within tolerance
    CHECK_THROWS_AS(AgreementCurve({10, 25}, {0.9, 0.9}, {1.2, 0.3}), Error);
}

TEST_CASE("fitted slope of disagreement against time") {
    const double slope = fitted_slope(default_experiment1_curve());
    CHECK(slope == doctest::Approx(0.19 / 15.0).epsilon(1e-12));
    CHECK(slope >= 0.001);
    CHECK(slope <= 0.018);
    CHECK(fitted_slope(AgreementCurve({10, 25}, {0.9, 0.9}, {0.4, 0.4})) == 0.0);
    CHECK(fitted_slope(AgreementCurve({0, 10}, {0.9, 0.9}, {1.0, 0.9}), {0, 10}) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK_THROWS_AS(fitted_slope(default_experiment1_curve(), {10}), Error);
}

TEST_CASE("isotonic projection pools adjacent violators") {
    CHECK(isotonic_non_increasing({3, 1, 2}) == std::vector<double>{3, 1.5, 1.5});
    CHECK(isotonic_non_increasing({1, 2, 3}) == std::vector<double>{2, 2, 2});
    CHECK(isotonic_non_increasing({5, 4, 1}) == std::vector<double>{5, 4, 1});
}

TEST_CASE("calibration fixed point at beta one") {
    auto setup = small_setup();
    const auto terms = bias::AgreementTerms::build(setup.base, setup.model, setup.trials, setup.temperature);
    const double at_one = terms.agreement_at(1.0);
    const AgreementCurve target({10, 15, 20, 25}, {0.9, 0.9, 0.9, 0.9}, {at_one, at_one, at_one, at_one});
    const auto s = calibrate_beta(target, setup);
    for (double b : s.betas()) CHECK(std::abs(b - 1.0) < 1e-9);
    CHECK(s.residual() < 1e-12);
}

TEST_CASE("unreachable targets report the achievable interval") {
    const AgreementCurve target({10, 25}, {0.9, 0.9}, {0.0, 0.0});
    try {
        calibrate_beta(target, small_setup());
        FAIL("expected a calibration error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Calibration);
        CHECK(std::string(e.what()).find("achievable interval") != std::string::npos);
    }
}

TEST_CASE("calibrated schedules are monotone and hit reachable knots") {
    auto setup = small_setup();
    const auto terms = bias::AgreementTerms::build(setup.base, setup.model, setup.trials, setup.temperature);
    const double lo = terms.agreement_at(0.5), hi = terms.agreement_at(4.0);
    const AgreementCurve target({10, 25}, {0.9, 0.9}, {hi, lo});
    const auto s = calibrate_beta(target, setup);
    CHECK(s.at(10) > s.at(25));
    CHECK(s.residual() < 1e-9);
    CHECK(s.at(17.5) == doctest::Approx(0.5 * (s.at(10) + s.at(25))));

    const auto back = beta_schedule_from_json(to_json(s));
    CHECK(back.betas() == s.betas());
    CHECK(back.times() == s.times());
    CHECK(back.residual() == s.residual());
    CHECK_THROWS_AS(BetaSchedule({10, 25}, {1.0, 2.0}, 0.0), Error);
}

TEST_CASE("curve JSON round-trip and knot exactness") {
    const auto c = explained_confidence_curve();
    const auto back = agreement_curve_from_json(to_json(c));
    for (double t : c.times()) {
        CHECK(back.agree_wrong(t) == c.agree_wrong(t));
        CHECK(back.agree_right(t) == c.agree_right(t));
    }
    CHECK(back.name() == c.name());
}

TEST_CASE("closed loop on the probe trials") {
    const auto& w = ts::world();
    const sim::Experiment1Design d1(w, 77);
    const auto agent = ts::shipped_agent();
    const auto curve = default_experiment1_curve();
    const auto schedule = sim::calibrate_on_probes(w, d1, agent, curve);
    CHECK(schedule.at(10) > schedule.at(25));

    // 10^4 simulated agents per knot, each answering every probe trial.
    const auto probes = d1.probe_observations();
    for (double t : curve.times()) {
        const auto profile = agent.profile(schedule.at(t));
        std::uint64_t agree = 0, n = 0;
        for (std::uint64_t a = 0; a < 10000; ++a) {
            for (std::size_t i = 0; i < probes.size(); ++i) {
                const auto d = bias::simulate_decision(profile, w.agent_model, probes[i].obs, agent.temperature,
                                                       derive_seed(a, i + 1000 * static_cast<std::uint64_t>(t)));
                agree += d.label == *probes[i].obs.ai_prediction ? 1 : 0;
                ++n;
            }
        }
        const double p = static_cast<double>(agree) / static_cast<double>(n);
        CHECK(std::abs(p - curve.agree_wrong(t)) < 0.03);
    }
}
