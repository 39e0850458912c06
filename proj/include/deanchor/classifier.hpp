#pragma once

// Logistic regression over standardized student features, plus the advice
// (prediction, confidence, bin, optional flip) shown to participants.

#include <cstdint>
#include <string>
#include <vector>

#include "deanchor/json_io.hpp"
#include "deanchor/student_data.hpp"

namespace deanchor::model {

struct TrainingOptions {
    double learning_rate = 0.5;
    double l2 = 1e-3;
    int max_epochs = 5000;
    double gradient_tolerance = 1e-6;
    double init_scale = 0.0;  // weights ~ N(0, init_scale^2); zero gives a fixed start
    std::uint64_t seed = 0;
};

struct TrainingTrace {
    int epochs = 0;
    double final_loss = 0.0;
    double final_gradient_norm = 0.0;
    bool converged = false;  // gradient norm reached tolerance before the cap
};

class LinearClassifier {
public:
    LinearClassifier() = default;
    LinearClassifier(std::vector<data::EncodedColumn> columns, std::vector<double> means, std::vector<double> stddevs,
                     std::vector<double> weights, double intercept, TrainingOptions options);

    // P(pass) for an already standardized row.
    double probability(const std::vector<double>& standardized) const;
    double probability(const data::RawStudentRecord& record) const;
    int predict(const std::vector<double>& standardized) const { return probability(standardized) >= 0.5 ? 1 : 0; }

    const std::vector<data::EncodedColumn>& columns() const noexcept { return columns_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<double>& means() const noexcept { return means_; }
    const std::vector<double>& stddevs() const noexcept { return stddevs_; }
    double intercept() const noexcept { return intercept_; }
    const TrainingOptions& options() const noexcept { return options_; }
    const TrainingTrace& trace() const noexcept { return trace_; }
    void set_trace(const TrainingTrace& t) { trace_ = t; }

    // Distinct originating attributes in column order.
    std::vector<std::string> attributes() const;

private:
    std::vector<data::EncodedColumn> columns_;
    std::vector<double> means_;
    std::vector<double> stddevs_;
    std::vector<double> weights_;
    double intercept_ = 0.0;
    TrainingOptions options_;
    TrainingTrace trace_;
};

// Full-batch gradient descent on the L2-regularized mean log loss over
// the training split. Throws Training when the loss rises for 10
// consecutive epochs, with the recent loss trace in the message.
LinearClassifier train(const data::PreparedDataset& dataset, const TrainingOptions& options = {});

double accuracy(const LinearClassifier& model, const data::PreparedDataset& dataset, data::Split split);

// Attributes ranked by the largest |coefficient| among their columns.
struct RankedAttribute {
    std::string attribute;
    double importance = 0.0;
};
std::vector<RankedAttribute> rank_attributes(const LinearClassifier& model);

std::vector<std::string> rank_and_select_features(const LinearClassifier& model, std::size_t k);

// Attributes named in the reference list that are absent from `selected`.
std::vector<std::string> missing_attributes(const std::vector<std::string>& selected,
                                            const std::vector<std::string>& reference);

// The ten attributes retained for the human-facing task.
const std::vector<std::string>& reference_top10();
// The three attributes withheld from the reduced (7-feature) model.
const std::vector<std::string>& complementary_attributes();

std::vector<std::string> without(const std::vector<std::string>& list, const std::vector<std::string>& removed);

enum class ConfidenceBin { Low, High };

const char* to_string(ConfidenceBin b) noexcept;

inline constexpr double kDefaultConfidenceThreshold = 0.75;

struct AiAdvice {
    int predicted_label = 0;    // label shown to the participant
    double confidence = 0.5;    // max(p, 1 - p) of the unflipped model
    ConfidenceBin bin = ConfidenceBin::Low;
    bool flipped = false;
    int model_label = 0;        // the model's own argmax
};

// p is the model probability of class 1.
AiAdvice advise(double p, double confidence_threshold = kDefaultConfidenceThreshold, bool flip = false);
AiAdvice advise(const LinearClassifier& model, const std::vector<double>& standardized,
                double confidence_threshold = kDefaultConfidenceThreshold, bool flip = false);
AiAdvice flip_advice(const AiAdvice& advice);

Json to_json(const LinearClassifier& model, double confidence_threshold = kDefaultConfidenceThreshold);
LinearClassifier classifier_from_json(const Json& doc);

}  // namespace deanchor::model
