#include "deanchor/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "deanchor/bias_bayes.hpp"
#include "deanchor/rng.hpp"

namespace deanchor::data {

namespace {

// Draws an index from unnormalized weights.
int draw(Rng& rng, std::initializer_list<double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    int i = 0;
    for (double w : weights) {
        if (u < w) return i;
        u -= w;
        ++i;
    }
    return i - 1;
}

void set(RawStudentRecord& r, std::string_view name, int v) { r.codes[*attribute_index(name)] = v; }

RawStudentRecord draw_record(Rng& rng, Subject subject) {
    RawStudentRecord r;
    r.subject = subject;
    set(r, "school", draw(rng, {0.77, 0.23}));
    set(r, "sex", draw(rng, {0.55, 0.45}));
    set(r, "age", 15 + draw(rng, {0.2, 0.27, 0.27, 0.2, 0.05, 0.007, 0.002, 0.001}));
    set(r, "address", draw(rng, {0.72, 0.28}));
    set(r, "famsize", draw(rng, {0.3, 0.7}));
    set(r, "Pstatus", draw(rng, {0.88, 0.12}));
    const int medu = draw(rng, {0.01, 0.18, 0.28, 0.23, 0.30});
    set(r, "Medu", medu);
    set(r, "Fedu", std::clamp(medu - 1 + draw(rng, {0.35, 0.45, 0.2}), 0, 4));
    // teacher, health, services, at_home, other
    set(r, "Mjob", medu >= 4 ? draw(rng, {0.35, 0.15, 0.22, 0.06, 0.22}) : draw(rng, {0.04, 0.06, 0.24, 0.26, 0.40}));
    set(r, "Fjob", draw(rng, {0.06, 0.04, 0.28, 0.06, 0.56}));
    set(r, "reason", draw(rng, {0.25, 0.24, 0.41, 0.10}));
    set(r, "guardian", draw(rng, {0.70, 0.23, 0.07}));
    set(r, "traveltime", 1 + draw(rng, {0.6, 0.3, 0.07, 0.03}));
    set(r, "studytime", 1 + draw(rng, {0.3, 0.48, 0.15, 0.07}));
    set(r, "failures", draw(rng, {0.80, 0.12, 0.045, 0.035}));
    set(r, "schoolsup", draw(rng, {0.88, 0.12}));
    set(r, "famsup", draw(rng, {0.39, 0.61}));
    set(r, "paid", draw(rng, {0.79, 0.21}));
    set(r, "activities", draw(rng, {0.51, 0.49}));
    set(r, "nursery", draw(rng, {0.2, 0.8}));
    set(r, "higher", draw(rng, {0.09, 0.91}));
    set(r, "internet", draw(rng, {0.21, 0.79}));
    set(r, "romantic", draw(rng, {0.64, 0.36}));
    set(r, "famrel", 1 + draw(rng, {0.03, 0.05, 0.16, 0.49, 0.27}));
    set(r, "freetime", 1 + draw(rng, {0.07, 0.16, 0.40, 0.27, 0.10}));
    set(r, "goout", 1 + draw(rng, {0.06, 0.23, 0.32, 0.22, 0.17}));
    const int dalc = 1 + draw(rng, {0.7, 0.19, 0.07, 0.02, 0.02});
    set(r, "Dalc", dalc);
    set(r, "Walc", std::clamp(dalc + draw(rng, {0.45, 0.3, 0.15, 0.1}), 1, 5));
    set(r, "health", 1 + draw(rng, {0.12, 0.12, 0.2, 0.17, 0.39}));
    int absences = 0;
    if (!rng.bernoulli(0.35)) {
        absences = 1 + static_cast<int>(std::floor(-std::log(1.0 - rng.uniform()) * 5.0));
    }
    set(r, "absences", std::min(absences, 93));
    return r;
}

// Latent log-odds of passing; the signal sits in the reference attributes.
double pass_log_odds(const RawStudentRecord& r) {
    const int mjob = r.at("Mjob");
    const int fjob = r.at("Fjob");
    double z = 0.0;
    z += -1.0 * r.at("failures");
    z += 0.7 * (r.at("studytime") - 2);
    z += -0.55 * (r.at("goout") - 3);
    z += -1.2 * r.at("schoolsup");
    z += 1.1 * (r.at("higher") - 0.9);
    z += 0.25 * (r.at("Medu") - 2.6);
    z += 0.25 * (r.at("Fedu") - 2.4);
    z += mjob == 0 ? 0.35 : mjob == 1 ? 0.3 : mjob == 3 ? -0.3 : 0.0;
    z += fjob == 0 ? 0.6 : fjob == 3 ? -0.35 : 0.0;
    z += -0.08 * (r.at("absences") - 4);
    return 0.45 + (r.subject == Subject::Portuguese ? 0.3 : 0.0) + 0.8 * z;
}

}  // namespace

std::vector<RawStudentRecord> generate_surrogate(Subject subject, std::uint64_t seed) {
    Rng rng(derive_seed(seed, subject == Subject::Math ? 1 : 2));
    const std::size_t rows = subject == Subject::Math ? kMathRows : kPortugueseRows;
    std::vector<RawStudentRecord> out;
    out.reserve(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        RawStudentRecord r = draw_record(rng, subject);
        const bool pass = rng.bernoulli(bias::sigmoid(pass_log_odds(r)));
        int g3 = 0;
        if (pass) {
            g3 = 10 + draw(rng, {0.12, 0.13, 0.13, 0.12, 0.11, 0.1, 0.08, 0.07, 0.06, 0.04, 0.04});
        } else {
            g3 = rng.bernoulli(0.25) ? 0 : 5 + draw(rng, {0.1, 0.15, 0.2, 0.25, 0.3});
        }
        const int g1 = std::clamp(g3 + static_cast<int>(std::lround(1.5 * rng.normal())), 0, 20);
        const int g2 = std::clamp((g1 + g3) / 2 + static_cast<int>(std::lround(rng.normal())), 0, 20);
        set(r, "G1", g3 == 0 ? std::max(g1, 4) : g1);
        set(r, "G2", g2);
        set(r, "G3", g3);
        out.push_back(r);
    }
    return out;
}

void write_surrogate_files(const std::filesystem::path& directory, std::uint64_t seed) {
    write_uci_csv(directory / "student-mat.csv", generate_surrogate(Subject::Math, seed));
    write_uci_csv(directory / "student-por.csv", generate_surrogate(Subject::Portuguese, seed));
}

}  // namespace deanchor::data
