#include "deanchor/agreement.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "deanchor/error.hpp"

namespace deanchor::bias {

namespace {

constexpr std::size_t kShardSize = 4096;

double agree_probability(double log_ratio, double temperature, const TieRule& rule, int ai_prediction) {
    const double p1 = probability_label_one(log_ratio, temperature, rule, ai_prediction);
    return ai_prediction == 1 ? p1 : 1.0 - p1;
}

}  // namespace

FiniteSource::FiniteSource(std::vector<Observation> observations)
    : FiniteSource(observations, std::vector<double>(observations.size(), 1.0)) {}

FiniteSource::FiniteSource(std::vector<Observation> observations, std::vector<double> weights) {
    if (observations.empty()) fail(ErrorKind::Parameter, "finite source needs at least one observation");
    if (observations.size() != weights.size()) fail(ErrorKind::Parameter, "observation and weight counts differ");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(total > 0.0)) fail(ErrorKind::Parameter, "source weights must have positive total");
    double running = 0.0;
    for (std::size_t i = 0; i < observations.size(); ++i) {
        if (!(weights[i] >= 0.0)) fail(ErrorKind::Parameter, "source weights must be nonnegative");
        items_.push_back({std::move(observations[i]), weights[i] / total});
        running += weights[i] / total;
        cumulative_.push_back(running);
    }
    cumulative_.back() = 1.0;
}

std::optional<std::uint64_t> FiniteSource::support_size() const { return items_.size(); }

std::vector<WeightedObservation> FiniteSource::enumerate() const { return items_; }

Observation FiniteSource::sample(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), items_.size() - 1);
    return items_[idx].obs;
}

GenerativeSource::GenerativeSource(LabelPrior truth_prior, FeatureLikelihoodTable truth_features,
                                   AiOutputTable truth_ai)
    : prior_(truth_prior), features_(std::move(truth_features)), ai_(truth_ai) {}

std::optional<std::uint64_t> GenerativeSource::support_size() const { return features_.joint_support(); }

std::vector<WeightedObservation> GenerativeSource::enumerate() const {
    const std::uint64_t support = features_.joint_support();
    if (support > kMaxEnumerableSupport) {
        fail(ErrorKind::Capability, "feature space of " + std::to_string(support) +
                                        " joint values exceeds the exhaustive limit of 2^20");
    }
    const std::size_t nf = features_.size();
    std::vector<std::size_t> idx(nf, 0);
    std::vector<WeightedObservation> out;
    out.reserve(static_cast<std::size_t>(support) * 2);
    const double py[2] = {1.0 - prior_.p1(), prior_.p1()};
    for (std::uint64_t n = 0; n < support; ++n) {
        double joint[2] = {py[0], py[1]};
        std::vector<int> values(nf);
        for (std::size_t j = 0; j < nf; ++j) {
            const auto& f = features_.feature(j);
            values[j] = f.values[idx[j]];
            joint[0] *= f.prob[idx[j]][0];
            joint[1] *= f.prob[idx[j]][1];
        }
        for (int yhat = 0; yhat < 2; ++yhat) {
            const double w = joint[0] * ai_.q(yhat, 0) + joint[1] * ai_.q(yhat, 1);
            out.push_back({Observation{values, yhat}, w});
        }
        // Odometer increment over the feature domains.
        for (std::size_t j = 0; j < nf; ++j) {
            if (++idx[j] < features_.feature(j).values.size()) break;
            idx[j] = 0;
        }
    }
    return out;
}

Observation GenerativeSource::sample(Rng& rng) const {
    const int y = rng.bernoulli(prior_.p1()) ? 1 : 0;
    Observation obs;
    obs.values.reserve(features_.size());
    for (const auto& f : features_.features()) {
        double u = rng.uniform();
        std::size_t v = 0;
        for (; v + 1 < f.values.size(); ++v) {
            if (u < f.prob[v][y]) break;
            u -= f.prob[v][y];
        }
        obs.values.push_back(f.values[v]);
    }
    obs.ai_prediction = rng.bernoulli(ai_.q(1, y)) ? 1 : 0;
    return obs;
}

std::vector<WeightedObservation> SamplerSource::enumerate() const {
    fail(ErrorKind::Capability, "sampler-backed source cannot be enumerated; use Monte Carlo mode");
}

AgreementTerms AgreementTerms::build(const BiasProfile& profile, const SubjectiveModel& model,
                                     const std::vector<WeightedObservation>& observations, double temperature) {
    if (!(temperature >= 0.0)) fail(ErrorKind::Parameter, "temperature must be nonnegative");
    AgreementTerms terms;
    terms.tie_rule = profile.tie_rule;
    terms.temperature = temperature;
    terms.items.reserve(observations.size());
    for (const auto& wo : observations) {
        if (!wo.obs.ai_prediction) fail(ErrorKind::Parameter, "agreement requires a shown AI prediction");
        Item item;
        item.fixed = profile.alpha * evidence_log_ratio(model.likelihood, wo.obs) +
                     profile.gamma * model.prior.log_odds();
        item.ai_term = model.ai.log_ratio(*wo.obs.ai_prediction);
        item.ai_prediction = *wo.obs.ai_prediction;
        item.weight = wo.weight;
        terms.items.push_back(item);
    }
    return terms;
}

double AgreementTerms::agreement_at(double beta) const {
    // Normalizing by the summed weight keeps unanimous agreement at exactly 1.
    double total = 0.0, mass = 0.0;
    for (const auto& item : items) {
        const double lr = item.fixed + beta * item.ai_term;
        total += item.weight * agree_probability(lr, temperature, tie_rule, item.ai_prediction);
        mass += item.weight;
    }
    if (!(mass > 0.0)) fail(ErrorKind::Parameter, "agreement needs observations with positive weight");
    return std::clamp(total / mass, 0.0, 1.0);
}

AgreementEstimate agreement_probability(const BiasProfile& profile, const SubjectiveModel& model,
                                        const TrialSource& source, const AgreementOptions& options) {
    if (!(options.temperature >= 0.0)) fail(ErrorKind::Parameter, "temperature must be nonnegative");
    if (options.mode == AgreementMode::Exhaustive) {
        const auto support = source.support_size();
        if (!support) fail(ErrorKind::Capability, "exhaustive agreement requested on an unbounded source");
        const auto observations = source.enumerate();
        const auto terms = AgreementTerms::build(profile, model, observations, options.temperature);
        return {terms.agreement_at(profile.beta), 0.0, true, observations.size()};
    }

    if (options.samples == 0) fail(ErrorKind::Parameter, "Monte Carlo mode needs at least one sample");
    // Fixed-size shards with derived seeds: the estimate does not depend on
    // how shards are distributed over threads.
    const std::size_t shards = (options.samples + kShardSize - 1) / kShardSize;
    std::vector<std::size_t> hits(shards, 0);
    auto run_shard = [&](std::size_t s) {
        Rng rng(derive_seed(options.seed, s));
        const std::size_t begin = s * kShardSize;
        const std::size_t end = std::min(options.samples, begin + kShardSize);
        std::size_t agree = 0;
        for (std::size_t i = begin; i < end; ++i) {
            const Observation obs = source.sample(rng);
            if (!obs.ai_prediction) fail(ErrorKind::Parameter, "agreement requires a shown AI prediction");
            const Decision d = simulate_decision(profile, model, obs, options.temperature, rng.next_u64());
            agree += d.label == *obs.ai_prediction ? 1 : 0;
        }
        hits[s] = agree;
    };
    const unsigned threads = std::max(1U, std::min<unsigned>(options.threads, static_cast<unsigned>(shards)));
    if (threads == 1) {
        for (std::size_t s = 0; s < shards; ++s) run_shard(s);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t s = t; s < shards; s += threads) run_shard(s);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    const std::size_t total_hits = std::accumulate(hits.begin(), hits.end(), std::size_t{0});
    const double n = static_cast<double>(options.samples);
    const double p = static_cast<double>(total_hits) / n;
    return {p, std::sqrt(p * (1.0 - p) / n), false, options.samples};
}

}  // namespace deanchor::bias
