#pragma once

// Rational and bias-distorted binary posteriors over a label, combining
// feature evidence, an AI prediction, and a prior. Each factor is raised to
// its own exponent:
//
//   log P(1|.)/P(0|.) = alpha * sum_j log P(d_j|1)/P(d_j|0)
//                     + beta  * log q[yhat][1]/q[yhat][0]
//                     + gamma * log p1/(1-p1)
//
// Everything is evaluated in the log domain; probabilities are never
// multiplied directly.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deanchor/json_io.hpp"

namespace deanchor::bias {

// |log_ratio| at or below this is a tie.
inline constexpr double kTieTolerance = 1e-12;

class LabelPrior {
public:
    explicit LabelPrior(double p1);

    double p1() const noexcept { return p1_; }
    double log_odds() const noexcept { return log_odds_; }

private:
    double p1_;
    double log_odds_;
};

struct FeatureSpec {
    std::string name;
    std::vector<int> domain;  // admissible discrete values
};

// Per-feature class-conditional value probabilities P(d_j = v | Y = y).
class FeatureLikelihoodTable {
public:
    struct Feature {
        std::string name;
        std::vector<int> values;
        // prob[i][y] = P(value = values[i] | Y = y)
        std::vector<std::array<double, 2>> prob;
    };

    FeatureLikelihoodTable() = default;

    // Validates that each class column sums to 1 within 1e-12.
    FeatureLikelihoodTable(std::vector<Feature> features, double smoothing_pseudocount);

    // Laplace-smoothed frequency estimate. rows[i][j] is the value of
    // feature j for example i.
    static FeatureLikelihoodTable fit(const std::vector<FeatureSpec>& specs,
                                      std::span<const std::vector<int>> rows,
                                      std::span<const int> labels,
                                      double pseudocount = 1.0);

    std::size_t size() const noexcept { return features_.size(); }
    const Feature& feature(std::size_t j) const { return features_.at(j); }
    const std::vector<Feature>& features() const noexcept { return features_; }
    double smoothing_pseudocount() const noexcept { return pseudocount_; }

    std::optional<std::size_t> find(std::string_view name) const;

    // Index of value within feature j's domain. Throws Evidence naming the
    // feature when the value is not in the table.
    std::size_t value_index(std::size_t j, int value) const;

    // log P(v|1) - log P(v|0). Throws Model on a zero probability.
    double evidence_log_ratio(std::size_t j, int value) const;

    // Number of joint feature configurations (saturates at UINT64_MAX).
    std::uint64_t joint_support() const noexcept;

private:
    std::vector<Feature> features_;
    double pseudocount_ = 0.0;
};

// q[yhat][y] = P(Yhat = yhat | Y = y), the decision-maker's belief about
// how the AI output depends on the label.
class AiOutputTable {
public:
    using Matrix = std::array<std::array<double, 2>, 2>;

    explicit AiOutputTable(const Matrix& q);

    // Symmetric table with q[y][y] = accuracy (e.g. an announced 85%).
    static AiOutputTable from_accuracy(double accuracy);

    // Table from per-class accuracies, e.g. measured on held-out data.
    static AiOutputTable from_class_accuracies(double accuracy_given_0, double accuracy_given_1);

    double q(int yhat, int y) const { return q_.at(yhat).at(y); }
    const Matrix& matrix() const noexcept { return q_; }

    // q[y][y] > q[1-y][y] for both y. Reported, never enforced.
    bool diagonally_dominant() const noexcept;

    double log_ratio(int yhat) const;

private:
    Matrix q_;
};

enum class TieKind { FavorAi, FavorClass0, CoinFlip };

struct TieRule {
    TieKind kind = TieKind::FavorAi;
    std::uint64_t seed = 0;  // used by CoinFlip only
};

struct BiasProfile {
    double alpha = 1.0;  // data likelihood exponent
    double beta = 1.0;   // AI output exponent
    double gamma = 1.0;  // prior exponent
    TieRule tie_rule{};

    static BiasProfile rational();
    static BiasProfile anchoring(double beta);
    static BiasProfile confirmation(double gamma);
    static BiasProfile weak_evidence(double beta);
    static BiasProfile selective_accessibility(double alpha);

    BiasProfile with_beta(double b) const {
        BiasProfile p = *this;
        p.beta = b;
        return p;
    }
};

// Aligned with a FeatureLikelihoodTable; values[j] is the value of feature j.
struct Observation {
    std::vector<int> values;
    std::optional<int> ai_prediction;  // absent when no AI output is shown
};

struct SubjectiveModel {
    LabelPrior prior{0.5};
    FeatureLikelihoodTable likelihood;
    AiOutputTable ai{AiOutputTable::from_accuracy(0.85)};
};

struct Decision {
    double log_ratio = 0.0;
    int label = 0;
    bool was_tie = false;
};

// Summed data evidence for an observation, without the alpha weight.
double evidence_log_ratio(const FeatureLikelihoodTable& table, const Observation& obs);

double posterior_log_ratio(const BiasProfile& profile, const SubjectiveModel& model,
                           const Observation& obs);

// Sign rule with explicit tie handling. ai_prediction is consulted only
// for FavorAi ties (and falls back to class 0 when absent).
Decision decide(double log_ratio, const TieRule& rule, std::optional<int> ai_prediction = std::nullopt);

// With temperature > 0 the label is drawn with P(1) = sigmoid(log_ratio / t);
// temperature 0 is exactly decide(). Deterministic in seed.
Decision simulate_decision(const BiasProfile& profile, const SubjectiveModel& model,
                           const Observation& obs, double temperature, std::uint64_t seed);

double sigmoid(double x) noexcept;

// P(label = 1) for a given log ratio under the temperature rule; ties under
// CoinFlip count as one half.
double probability_label_one(double log_ratio, double temperature, const TieRule& rule,
                             std::optional<int> ai_prediction);

// JSON round-trips (schema-versioned documents).
Json to_json(const BiasProfile& profile);
BiasProfile bias_profile_from_json(const Json& doc);
Json to_json(const SubjectiveModel& model);
SubjectiveModel subjective_model_from_json(const Json& doc);

}  // namespace deanchor::bias
