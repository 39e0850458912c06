#include <doctest.h>

#include <cmath>

#include "deanchor/agreement.hpp"
#include "deanchor/error.hpp"
#include "oracles.hpp"

using namespace deanchor;
using namespace deanchor::bias;
using namespace oracles;

TEST_CASE("exhaustive agreement matches the enumeration oracle") {
    Rng rng(101);
    for (int k = 0; k < 200; ++k) {
        const auto w = random_world(rng, 1 + static_cast<int>(rng.below(4)));
        BiasProfile p;
        p.alpha = 0.5 + rng.uniform();
        p.beta = 4 * rng.uniform();
        p.gamma = 0.5 + rng.uniform();
        const double tau = k % 2 ? 0.0 : 0.3 + rng.uniform();
        AgreementOptions opt;
        opt.temperature = tau;
        const auto est = agreement_probability(p, w.model, source_of(w), opt);
        CHECK(est.exact);
        CHECK(std::abs(est.value - oracle_agreement(w, p, tau)) < 1e-12);
    }
}

TEST_CASE("unbiased agents on two binary features") {
    Rng rng(7);
    const auto w = random_world(rng, 2);
    const auto est = agreement_probability(BiasProfile::rational(), w.model, source_of(w));
    CHECK(std::abs(est.value - oracle_agreement(w, BiasProfile::rational(), 0.0)) < 1e-12);
}

TEST_CASE("huge beta gives agreement exactly one") {
    Rng rng(13);
    for (int k = 0; k < 50; ++k) {
        const auto w = random_world(rng, 4);
        REQUIRE(w.model.ai.diagonally_dominant());
        const auto est = agreement_probability(BiasProfile{1.0, 1e6, 1.0, {}}, w.model, source_of(w));
        CHECK(est.value == 1.0);
    }
}

TEST_CASE("agreement is non-decreasing in beta under diagonal dominance") {
    Rng rng(2024);
    int checked = 0;
    for (int k = 0; k < 250; ++k) {
        const auto w = random_world(rng, 1 + static_cast<int>(rng.below(5)));
        AgreementOptions opt;
        opt.temperature = k % 3 == 0 ? 0.7 : 0.0;
        double prev = -1.0;
        for (double beta : {0.5, 1.0, 2.0, 4.0, 8.0}) {
            const double v = agreement_probability(BiasProfile{1.0, beta, 1.0, {}}, w.model, source_of(w), opt).value;
            CHECK(v >= prev - 1e-15);
            prev = v;
        }
        ++checked;
    }
    CHECK(checked >= 200);
}

TEST_CASE("weak-evidence exponents lower agreement") {
    Rng rng(31);
    for (int k = 0; k < 100; ++k) {
        const auto w = random_world(rng, 3);
        const double at_one = agreement_probability(BiasProfile{}, w.model, source_of(w)).value;
        const double weak = agreement_probability(BiasProfile::weak_evidence(-1.5 - 3 * rng.uniform()), w.model,
                                                  source_of(w)).value;
        CHECK(weak <= at_one + 1e-15);
    }
}

TEST_CASE("swept terms equal direct agreement") {
    Rng rng(37);
    const auto w = random_world(rng, 4);
    const auto obs = source_of(w).enumerate();
    for (double tau : {0.0, 0.5}) {
        const auto terms = AgreementTerms::build(BiasProfile{}, w.model, obs, tau);
        AgreementOptions opt;
        opt.temperature = tau;
        for (double beta : {0.0, 0.3, 1.0, 2.5, 9.0}) {
            const double direct = agreement_probability(BiasProfile{1.0, beta, 1.0, {}}, w.model, source_of(w), opt).value;
            CHECK(std::abs(terms.agreement_at(beta) - direct) < 1e-12);
        }
    }
}

TEST_CASE("Monte Carlo estimates bracket the exact value and ignore thread count") {
    Rng rng(41);
    const auto w = random_world(rng, 4);
    const BiasProfile p{1.0, 2.0, 1.0, {}};
    const double exact = agreement_probability(p, w.model, source_of(w)).value;
    AgreementOptions opt;
    opt.mode = AgreementMode::MonteCarlo;
    opt.samples = 200000;
    opt.seed = 5;
    opt.threads = 1;
    const auto one = agreement_probability(p, w.model, source_of(w), opt);
    opt.threads = 3;
    const auto three = agreement_probability(p, w.model, source_of(w), opt);
    CHECK_FALSE(one.exact);
    CHECK(one.value == three.value);
    CHECK(one.std_error > 0.0);
    CHECK(std::abs(one.value - exact) < 4 * one.std_error);
}

TEST_CASE("opaque sources refuse enumeration") {
    SamplerSource src([](Rng&) { return Observation{{0}, 1}; });
    CHECK_THROWS_AS(src.enumerate(), Error);
    SubjectiveModel m;
    m.likelihood = binary_table({{0.5, 0.6}});
    try {
        agreement_probability(BiasProfile{}, m, src);
        FAIL("expected a capability error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Capability);
    }
}

TEST_CASE("finite sources normalize their weights") {
    FiniteSource src({Observation{{0}, 1}, Observation{{1}, 0}}, {3.0, 1.0});
    const auto items = src.enumerate();
    REQUIRE(items.size() == 2);
    CHECK(items[0].weight == doctest::Approx(0.75));
    CHECK(items[1].weight == doctest::Approx(0.25));
}
