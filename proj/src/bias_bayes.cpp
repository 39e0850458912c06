#include "deanchor/bias_bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deanchor/error.hpp"
#include "deanchor/rng.hpp"

namespace deanchor::bias {

namespace {

constexpr double kSumTolerance = 1e-12;

void check_probability_open(double p, const char* what) {
    if (!(p > 0.0 && p < 1.0)) {
        fail(ErrorKind::Parameter, std::string(what) + " must lie strictly inside (0, 1), got " + std::to_string(p));
    }
}

const char* tie_name(TieKind kind) {
    switch (kind) {
        case TieKind::FavorAi: return "favor_ai";
        case TieKind::FavorClass0: return "favor_class0";
        case TieKind::CoinFlip: return "coin_flip";
    }
    return "favor_ai";
}

TieKind tie_from_name(const std::string& s) {
    if (s == "favor_ai") return TieKind::FavorAi;
    if (s == "favor_class0") return TieKind::FavorClass0;
    if (s == "coin_flip") return TieKind::CoinFlip;
    fail(ErrorKind::Config, "unknown tie_rule '" + s + "'");
}

}  // namespace

LabelPrior::LabelPrior(double p1) : p1_(p1) {
    check_probability_open(p1, "prior p1");
    log_odds_ = std::log(p1) - std::log1p(-p1);
}

FeatureLikelihoodTable::FeatureLikelihoodTable(std::vector<Feature> features, double smoothing_pseudocount)
    : features_(std::move(features)), pseudocount_(smoothing_pseudocount) {
    if (!(smoothing_pseudocount >= 0.0)) fail(ErrorKind::Parameter, "smoothing pseudocount must be nonnegative");
    for (const auto& f : features_) {
        if (f.values.empty() || f.values.size() != f.prob.size()) {
            fail(ErrorKind::Model, "feature '" + f.name + "' has an empty or misaligned value table");
        }
        for (int y = 0; y < 2; ++y) {
            double sum = 0.0;
            for (const auto& p : f.prob) {
                if (!(p[y] >= 0.0)) fail(ErrorKind::Model, "feature '" + f.name + "' has a negative probability");
                sum += p[y];
            }
            if (std::abs(sum - 1.0) > kSumTolerance) {
                fail(ErrorKind::Model, "feature '" + f.name + "' class " + std::to_string(y) +
                                           " probabilities sum to " + std::to_string(sum));
            }
        }
    }
}

FeatureLikelihoodTable FeatureLikelihoodTable::fit(const std::vector<FeatureSpec>& specs,
                                                   std::span<const std::vector<int>> rows,
                                                   std::span<const int> labels, double pseudocount) {
    if (rows.size() != labels.size()) fail(ErrorKind::Parameter, "rows and labels differ in length");
    if (!(pseudocount >= 0.0)) fail(ErrorKind::Parameter, "smoothing pseudocount must be nonnegative");

    std::vector<Feature> features;
    features.reserve(specs.size());
    for (std::size_t j = 0; j < specs.size(); ++j) {
        const auto& spec = specs[j];
        std::vector<std::array<double, 2>> counts(spec.domain.size(), {pseudocount, pseudocount});
        std::array<double, 2> totals{pseudocount * spec.domain.size(), pseudocount * spec.domain.size()};
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != specs.size()) fail(ErrorKind::Parameter, "row width differs from feature count");
            const int y = labels[i];
            if (y != 0 && y != 1) fail(ErrorKind::Parameter, "labels must be 0 or 1");
            auto it = std::find(spec.domain.begin(), spec.domain.end(), rows[i][j]);
            if (it == spec.domain.end()) {
                fail(ErrorKind::Evidence, "value " + std::to_string(rows[i][j]) + " of feature '" + spec.name +
                                              "' is outside its domain");
            }
            counts[static_cast<std::size_t>(it - spec.domain.begin())][y] += 1.0;
            totals[y] += 1.0;
        }
        Feature f{spec.name, spec.domain, {}};
        f.prob.resize(spec.domain.size());
        for (int y = 0; y < 2; ++y) {
            if (totals[y] <= 0.0) fail(ErrorKind::Model, "class " + std::to_string(y) + " has no mass for '" + spec.name + "'");
            // Normalize so the column sums to one to working precision.
            double sum = 0.0;
            for (std::size_t v = 0; v < counts.size(); ++v) {
                f.prob[v][y] = counts[v][y] / totals[y];
                sum += f.prob[v][y];
            }
            for (auto& p : f.prob) p[y] /= sum;
        }
        features.push_back(std::move(f));
    }
    return FeatureLikelihoodTable(std::move(features), pseudocount);
}

std::optional<std::size_t> FeatureLikelihoodTable::find(std::string_view name) const {
    for (std::size_t j = 0; j < features_.size(); ++j) {
        if (features_[j].name == name) return j;
    }
    return std::nullopt;
}

std::size_t FeatureLikelihoodTable::value_index(std::size_t j, int value) const {
    const auto& f = features_.at(j);
    auto it = std::find(f.values.begin(), f.values.end(), value);
    if (it == f.values.end()) {
        fail(ErrorKind::Evidence, "feature '" + f.name + "' has no entry for value " + std::to_string(value));
    }
    return static_cast<std::size_t>(it - f.values.begin());
}

double FeatureLikelihoodTable::evidence_log_ratio(std::size_t j, int value) const {
    const auto& p = features_.at(j).prob[value_index(j, value)];
    if (p[0] <= 0.0 || p[1] <= 0.0) {
        fail(ErrorKind::Model, "zero probability for feature '" + features_[j].name + "' value " +
                                   std::to_string(value) + " (check the smoothing pseudocount)");
    }
    return std::log(p[1]) - std::log(p[0]);
}

std::uint64_t FeatureLikelihoodTable::joint_support() const noexcept {
    std::uint64_t n = 1;
    for (const auto& f : features_) {
        const std::uint64_t k = f.values.size();
        if (n > std::numeric_limits<std::uint64_t>::max() / k) return std::numeric_limits<std::uint64_t>::max();
        n *= k;
    }
    return n;
}

AiOutputTable::AiOutputTable(const Matrix& q) : q_(q) {
    for (int y = 0; y < 2; ++y) {
        if (!(q_[0][y] > 0.0) || !(q_[1][y] > 0.0)) fail(ErrorKind::Model, "AI output table entries must be positive");
        if (std::abs(q_[0][y] + q_[1][y] - 1.0) > kSumTolerance) {
            fail(ErrorKind::Model, "AI output table column " + std::to_string(y) + " does not sum to 1");
        }
    }
}

AiOutputTable AiOutputTable::from_accuracy(double accuracy) {
    return from_class_accuracies(accuracy, accuracy);
}

AiOutputTable AiOutputTable::from_class_accuracies(double accuracy_given_0, double accuracy_given_1) {
    check_probability_open(accuracy_given_0, "AI accuracy given class 0");
    check_probability_open(accuracy_given_1, "AI accuracy given class 1");
    Matrix q{};
    q[0][0] = accuracy_given_0;
    q[1][0] = 1.0 - accuracy_given_0;
    q[1][1] = accuracy_given_1;
    q[0][1] = 1.0 - accuracy_given_1;
    return AiOutputTable(q);
}

bool AiOutputTable::diagonally_dominant() const noexcept {
    return q_[0][0] > q_[1][0] && q_[1][1] > q_[0][1];
}

double AiOutputTable::log_ratio(int yhat) const {
    if (yhat != 0 && yhat != 1) fail(ErrorKind::Parameter, "AI prediction must be 0 or 1");
    return std::log(q_[yhat][1]) - std::log(q_[yhat][0]);
}

BiasProfile BiasProfile::rational() { return {}; }

BiasProfile BiasProfile::anchoring(double beta) {
    if (!(beta > 1.0)) fail(ErrorKind::Parameter, "anchoring requires beta > 1");
    BiasProfile p;
    p.beta = beta;
    return p;
}

BiasProfile BiasProfile::confirmation(double gamma) {
    if (!(gamma > 1.0)) fail(ErrorKind::Parameter, "confirmation bias requires gamma > 1");
    BiasProfile p;
    p.gamma = gamma;
    return p;
}

BiasProfile BiasProfile::weak_evidence(double beta) {
    if (!(beta < -1.0)) fail(ErrorKind::Parameter, "weak-evidence effect requires beta < -1");
    BiasProfile p;
    p.beta = beta;
    return p;
}

BiasProfile BiasProfile::selective_accessibility(double alpha) {
    if (!(alpha > 1.0 || alpha < -1.0)) fail(ErrorKind::Parameter, "selective accessibility requires |alpha| > 1");
    BiasProfile p;
    p.alpha = alpha;
    return p;
}

double evidence_log_ratio(const FeatureLikelihoodTable& table, const Observation& obs) {
    if (obs.values.size() != table.size()) {
        // Name the first feature the observation does not cover.
        const std::size_t missing = std::min(obs.values.size(), table.size());
        if (missing < table.size()) {
            fail(ErrorKind::Evidence, "observation lacks feature '" + table.feature(missing).name + "'");
        }
        fail(ErrorKind::Evidence, "observation has more features than the likelihood table");
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < table.size(); ++j) sum += table.evidence_log_ratio(j, obs.values[j]);
    return sum;
}

double posterior_log_ratio(const BiasProfile& profile, const SubjectiveModel& model, const Observation& obs) {
    if (!std::isfinite(profile.alpha) || !std::isfinite(profile.beta) || !std::isfinite(profile.gamma)) {
        fail(ErrorKind::Parameter, "bias exponents must be finite");
    }
    double lr = profile.alpha * evidence_log_ratio(model.likelihood, obs);
    if (obs.ai_prediction) lr += profile.beta * model.ai.log_ratio(*obs.ai_prediction);
    lr += profile.gamma * model.prior.log_odds();
    return lr;
}

Decision decide(double log_ratio, const TieRule& rule, std::optional<int> ai_prediction) {
    Decision d;
    d.log_ratio = log_ratio;
    if (std::abs(log_ratio) <= kTieTolerance) {
        d.was_tie = true;
        switch (rule.kind) {
            case TieKind::FavorAi: d.label = ai_prediction.value_or(0); break;
            case TieKind::FavorClass0: d.label = 0; break;
            case TieKind::CoinFlip: d.label = static_cast<int>(mix_seed(rule.seed) & 1U); break;
        }
        return d;
    }
    d.label = log_ratio > 0.0 ? 1 : 0;
    return d;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double probability_label_one(double log_ratio, double temperature, const TieRule& rule,
                             std::optional<int> ai_prediction) {
    if (temperature > 0.0) return sigmoid(log_ratio / temperature);
    if (std::abs(log_ratio) <= kTieTolerance) {
        switch (rule.kind) {
            case TieKind::FavorAi: return ai_prediction.value_or(0) == 1 ? 1.0 : 0.0;
            case TieKind::FavorClass0: return 0.0;
            case TieKind::CoinFlip: return 0.5;
        }
    }
    return log_ratio > 0.0 ? 1.0 : 0.0;
}

Decision simulate_decision(const BiasProfile& profile, const SubjectiveModel& model, const Observation& obs,
                           double temperature, std::uint64_t seed) {
    if (!(temperature >= 0.0)) fail(ErrorKind::Parameter, "temperature must be nonnegative");
    const double lr = posterior_log_ratio(profile, model, obs);
    if (temperature == 0.0) {
        TieRule rule = profile.tie_rule;
        if (rule.kind == TieKind::CoinFlip) rule.seed = derive_seed(rule.seed, seed);
        return decide(lr, rule, obs.ai_prediction);
    }
    Rng rng(seed);
    Decision d;
    d.log_ratio = lr;
    d.was_tie = std::abs(lr) <= kTieTolerance;
    d.label = rng.uniform() < sigmoid(lr / temperature) ? 1 : 0;
    return d;
}

Json to_json(const BiasProfile& profile) {
    Json doc = make_document("bias_profile");
    doc["alpha"] = profile.alpha;
    doc["beta"] = profile.beta;
    doc["gamma"] = profile.gamma;
    doc["tie_rule"] = tie_name(profile.tie_rule.kind);
    doc["tie_seed"] = profile.tie_rule.seed;
    return doc;
}

BiasProfile bias_profile_from_json(const Json& doc) {
    check_document(doc, "bias_profile");
    BiasProfile p;
    p.alpha = require_as<double>(doc, "alpha");
    p.beta = require_as<double>(doc, "beta");
    p.gamma = require_as<double>(doc, "gamma");
    p.tie_rule.kind = tie_from_name(value_or<std::string>(doc, "tie_rule", "favor_ai"));
    p.tie_rule.seed = value_or<std::uint64_t>(doc, "tie_seed", 0);
    if (!std::isfinite(p.alpha) || !std::isfinite(p.beta) || !std::isfinite(p.gamma)) {
        fail(ErrorKind::Config, "bias exponents must be finite");
    }
    return p;
}

Json to_json(const SubjectiveModel& model) {
    Json doc = make_document("subjective_model");
    doc["prior_p1"] = model.prior.p1();
    Json ai = Json::array();
    for (const auto& row : model.ai.matrix()) ai.push_back({row[0], row[1]});
    doc["ai_output_table"] = ai;
    doc["smoothing_pseudocount"] = model.likelihood.smoothing_pseudocount();
    Json features = Json::array();
    for (const auto& f : model.likelihood.features()) {
        Json jf;
        jf["name"] = f.name;
        jf["values"] = f.values;
        Json p0 = Json::array(), p1 = Json::array();
        for (const auto& p : f.prob) {
            p0.push_back(p[0]);
            p1.push_back(p[1]);
        }
        jf["p_given_0"] = p0;
        jf["p_given_1"] = p1;
        features.push_back(jf);
    }
    doc["features"] = features;
    return doc;
}

SubjectiveModel subjective_model_from_json(const Json& doc) {
    check_document(doc, "subjective_model");
    const auto& ai = require(doc, "ai_output_table");
    AiOutputTable::Matrix q{};
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) q[r][c] = ai.at(r).at(c).get<double>();
    }
    std::vector<FeatureLikelihoodTable::Feature> features;
    for (const auto& jf : require(doc, "features")) {
        FeatureLikelihoodTable::Feature f;
        f.name = require_as<std::string>(jf, "name");
        f.values = require_as<std::vector<int>>(jf, "values");
        const auto p0 = require_as<std::vector<double>>(jf, "p_given_0");
        const auto p1 = require_as<std::vector<double>>(jf, "p_given_1");
        if (p0.size() != f.values.size() || p1.size() != f.values.size()) {
            fail(ErrorKind::Config, "feature '" + f.name + "' has misaligned probability arrays");
        }
        for (std::size_t i = 0; i < f.values.size(); ++i) f.prob.push_back({p0[i], p1[i]});
        features.push_back(std::move(f));
    }
    return SubjectiveModel{LabelPrior(require_as<double>(doc, "prior_p1")),
                           FeatureLikelihoodTable(std::move(features), require_as<double>(doc, "smoothing_pseudocount")),
                           AiOutputTable(q)};
}

}  // namespace deanchor::bias
