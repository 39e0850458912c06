#pragma once

// Probability-domain enumeration oracles over small binary-feature worlds.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "deanchor/agreement.hpp"
#include "deanchor/rng.hpp"

namespace oracles {

using namespace deanchor;
using namespace deanchor::bias;

struct BinaryWorld {
    std::vector<std::array<double, 2>> truth_p1;  // P(d_j = 1 | y)
    double truth_prior = 0.5;
    std::array<double, 2> truth_acc{};            // P(yhat = y | y)
    std::vector<std::array<double, 2>> belief_p1;
    SubjectiveModel model;
    FeatureLikelihoodTable truth_table;
};

inline FeatureLikelihoodTable binary_table(const std::vector<std::array<double, 2>>& p1) {
    std::vector<FeatureLikelihoodTable::Feature> fs;
    for (std::size_t j = 0; j < p1.size(); ++j) {
        fs.push_back({"f" + std::to_string(j), {0, 1}, {{1 - p1[j][0], 1 - p1[j][1]}, {p1[j][0], p1[j][1]}}});
    }
    return FeatureLikelihoodTable(fs, 0.0);
}

inline BinaryWorld random_world(Rng& rng, int features) {
    BinaryWorld w;
    for (int j = 0; j < features; ++j) {
        w.truth_p1.push_back({0.1 + 0.8 * rng.uniform(), 0.1 + 0.8 * rng.uniform()});
        w.belief_p1.push_back({0.1 + 0.8 * rng.uniform(), 0.1 + 0.8 * rng.uniform()});
    }
    w.truth_prior = 0.2 + 0.6 * rng.uniform();
    w.truth_acc = {0.5 + 0.45 * rng.uniform(), 0.5 + 0.45 * rng.uniform()};
    w.truth_table = binary_table(w.truth_p1);
    w.model.likelihood = binary_table(w.belief_p1);
    w.model.prior = LabelPrior(0.2 + 0.6 * rng.uniform());
    w.model.ai = AiOutputTable::from_class_accuracies(0.55 + 0.4 * rng.uniform(), 0.55 + 0.4 * rng.uniform());
    return w;
}

inline GenerativeSource source_of(const BinaryWorld& w) {
    return GenerativeSource(LabelPrior(w.truth_prior), w.truth_table,
                            AiOutputTable::from_class_accuracies(w.truth_acc[0], w.truth_acc[1]));
}

// Subjective biased posterior for one cell, normalized explicitly.
inline double oracle_log_ratio(const BinaryWorld& w, const BiasProfile& p, unsigned bits, int yhat) {
    const int n = static_cast<int>(w.belief_p1.size());
    double joint[2];
    for (int y = 0; y < 2; ++y) {
        double lik = 1.0;
        for (int j = 0; j < n; ++j) {
            const double p1 = w.belief_p1[static_cast<std::size_t>(j)][static_cast<std::size_t>(y)];
            lik *= ((bits >> j) & 1u) ? p1 : 1 - p1;
        }
        const double prior = y == 1 ? w.model.prior.p1() : 1 - w.model.prior.p1();
        joint[y] = std::pow(lik, p.alpha) * std::pow(w.model.ai.q(yhat, y), p.beta) * std::pow(prior, p.gamma);
    }
    return std::log(joint[1] / (joint[0] + joint[1])) - std::log(joint[0] / (joint[0] + joint[1]));
}

// Brute force: every (features, yhat, y) cell in the probability domain.
inline double oracle_agreement(const BinaryWorld& w, const BiasProfile& p, double temperature) {
    const int n = static_cast<int>(w.truth_p1.size());
    double total = 0.0;
    for (unsigned bits = 0; bits < (1u << n); ++bits) {
        for (int yhat = 0; yhat < 2; ++yhat) {
            double weight = 0.0;
            for (int y = 0; y < 2; ++y) {
                double v = y == 1 ? w.truth_prior : 1 - w.truth_prior;
                for (int j = 0; j < n; ++j) {
                    const double p1 = w.truth_p1[static_cast<std::size_t>(j)][static_cast<std::size_t>(y)];
                    v *= ((bits >> j) & 1u) ? p1 : 1 - p1;
                }
                const double acc = w.truth_acc[static_cast<std::size_t>(y)];
                v *= yhat == y ? acc : 1 - acc;
                weight += v;
            }
            const double lr = oracle_log_ratio(w, p, bits, yhat);
            double p_one;
            if (temperature == 0.0) {
                p_one = std::abs(lr) <= kTieTolerance ? (yhat == 1 ? 1.0 : 0.0) : (lr > 0 ? 1.0 : 0.0);
            } else {
                p_one = 1.0 / (1.0 + std::exp(-lr / temperature));
            }
            total += weight * (yhat == 1 ? p_one : 1 - p_one);
        }
    }
    return total;
}

}  // namespace oracles
