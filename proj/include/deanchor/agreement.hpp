#pragma once

// Trial sources and the agreement probability P(decision == shown AI
// prediction), the operational measure of anchoring.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "deanchor/bias_bayes.hpp"
#include "deanchor/rng.hpp"

namespace deanchor::bias {

// Exhaustive enumeration is refused above this many joint feature values.
inline constexpr std::uint64_t kMaxEnumerableSupport = std::uint64_t{1} << 20;

struct WeightedObservation {
    Observation obs;
    double weight = 0.0;
};

class TrialSource {
public:
    virtual ~TrialSource() = default;

    // Joint feature-space size, or nullopt for unbounded/opaque sources.
    virtual std::optional<std::uint64_t> support_size() const = 0;

    // Weights sum to 1. Throws Capability when not enumerable.
    virtual std::vector<WeightedObservation> enumerate() const = 0;

    virtual Observation sample(Rng& rng) const = 0;
};

// A finite list of observations with (normalized) weights.
class FiniteSource final : public TrialSource {
public:
    explicit FiniteSource(std::vector<Observation> observations);
    FiniteSource(std::vector<Observation> observations, std::vector<double> weights);

    std::optional<std::uint64_t> support_size() const override;
    std::vector<WeightedObservation> enumerate() const override;
    Observation sample(Rng& rng) const override;

    std::size_t size() const noexcept { return items_.size(); }

private:
    std::vector<WeightedObservation> items_;
    std::vector<double> cumulative_;
};

// Generative world: Y ~ Bernoulli(p1), features conditionally independent
// given Y, and the shown prediction drawn from an AI table given Y.
class GenerativeSource final : public TrialSource {
public:
    GenerativeSource(LabelPrior truth_prior, FeatureLikelihoodTable truth_features,
                     AiOutputTable truth_ai);

    std::optional<std::uint64_t> support_size() const override;
    std::vector<WeightedObservation> enumerate() const override;
    Observation sample(Rng& rng) const override;

private:
    LabelPrior prior_;
    FeatureLikelihoodTable features_;
    AiOutputTable ai_;
};

// Opaque sampler; cannot be enumerated.
class SamplerSource final : public TrialSource {
public:
    using Sampler = std::function<Observation(Rng&)>;
    explicit SamplerSource(Sampler sampler) : sampler_(std::move(sampler)) {}

    std::optional<std::uint64_t> support_size() const override { return std::nullopt; }
    std::vector<WeightedObservation> enumerate() const override;
    Observation sample(Rng& rng) const override { return sampler_(rng); }

private:
    Sampler sampler_;
};

enum class AgreementMode { Exhaustive, MonteCarlo };

struct AgreementOptions {
    AgreementMode mode = AgreementMode::Exhaustive;
    double temperature = 0.0;
    std::size_t samples = 100000;  // Monte Carlo only
    std::uint64_t seed = 0;        // Monte Carlo only
    unsigned threads = 1;          // Monte Carlo only; result independent of it
};

struct AgreementEstimate {
    double value = 0.0;
    double std_error = 0.0;  // 0 in exhaustive mode
    bool exact = false;
    std::size_t samples = 0;
};

AgreementEstimate agreement_probability(const BiasProfile& profile, const SubjectiveModel& model,
                                        const TrialSource& source,
                                        const AgreementOptions& options = {});

// Precomputed per-observation terms so the AI exponent can be swept cheaply.
// log_ratio(beta) = fixed + beta * ai_term.
struct AgreementTerms {
    struct Item {
        double fixed = 0.0;
        double ai_term = 0.0;
        int ai_prediction = 0;
        double weight = 0.0;
    };
    std::vector<Item> items;
    TieRule tie_rule{};
    double temperature = 0.0;

    static AgreementTerms build(const BiasProfile& profile, const SubjectiveModel& model,
                                const std::vector<WeightedObservation>& observations,
                                double temperature);

    // Exact expected agreement at the given AI exponent.
    double agreement_at(double beta) const;
};

}  // namespace deanchor::bias
