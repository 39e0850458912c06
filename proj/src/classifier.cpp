#include "deanchor/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "deanchor/bias_bayes.hpp"
#include "deanchor/error.hpp"
#include "deanchor/rng.hpp"

namespace deanchor::model {

using data::Split;

LinearClassifier::LinearClassifier(std::vector<data::EncodedColumn> columns, std::vector<double> means,
                                   std::vector<double> stddevs, std::vector<double> weights, double intercept,
                                   TrainingOptions options)
    : columns_(std::move(columns)),
      means_(std::move(means)),
      stddevs_(std::move(stddevs)),
      weights_(std::move(weights)),
      intercept_(intercept),
      options_(options) {
    if (columns_.size() != weights_.size() || means_.size() != weights_.size() || stddevs_.size() != weights_.size()) {
        fail(ErrorKind::Model, "classifier columns, statistics, and weights differ in length");
    }
    for (double w : weights_) {
        if (!std::isfinite(w)) fail(ErrorKind::Model, "classifier weight is not finite");
    }
}

double LinearClassifier::probability(const std::vector<double>& standardized) const {
    if (standardized.size() != weights_.size()) fail(ErrorKind::Parameter, "row width does not match the model");
    double z = intercept_;
    for (std::size_t c = 0; c < weights_.size(); ++c) z += weights_[c] * standardized[c];
    return bias::sigmoid(z);
}

double LinearClassifier::probability(const data::RawStudentRecord& record) const {
    return probability(data::encode_standardized(record, columns_, means_, stddevs_));
}

std::vector<std::string> LinearClassifier::attributes() const {
    std::vector<std::string> out;
    for (const auto& col : columns_) {
        if (std::find(out.begin(), out.end(), col.attribute) == out.end()) out.push_back(col.attribute);
    }
    return out;
}

namespace {

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;  // weights..., intercept last
};

LossGrad loss_and_gradient(const data::PreparedDataset& ds, const std::vector<double>& w, double b, double l2) {
    const std::size_t d = w.size();
    LossGrad out;
    out.grad.assign(d + 1, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < ds.x.size(); ++i) {
        if (ds.split[i] != Split::Train) continue;
        ++n;
        const auto& row = ds.x[i];
        double z = b;
        for (std::size_t c = 0; c < d; ++c) z += w[c] * row[c];
        const double y = ds.y[i];
        // log(1 + e^z) - y z, evaluated stably.
        out.loss += (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z;
        const double r = bias::sigmoid(z) - y;
        for (std::size_t c = 0; c < d; ++c) out.grad[c] += r * row[c];
        out.grad[d] += r;
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.loss *= inv;
    for (auto& g : out.grad) g *= inv;
    for (std::size_t c = 0; c < d; ++c) {
        out.loss += 0.5 * l2 * w[c] * w[c];
        out.grad[c] += l2 * w[c];
    }
    return out;
}

}  // namespace

LinearClassifier train(const data::PreparedDataset& ds, const TrainingOptions& options) {
    if (ds.columns.empty()) fail(ErrorKind::Training, "dataset has no feature columns");
    if (!(options.learning_rate > 0.0) || options.max_epochs <= 0 || !(options.l2 >= 0.0)) {
        fail(ErrorKind::Parameter, "invalid training hyperparameters");
    }
    bool seen[2] = {false, false};
    for (std::size_t i = 0; i < ds.y.size(); ++i) {
        if (ds.split[i] == Split::Train) seen[ds.y[i]] = true;
    }
    if (!seen[0] || !seen[1]) fail(ErrorKind::Training, "training split must contain both classes");

    const std::size_t d = ds.columns.size();
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    if (options.init_scale > 0.0) {
        Rng rng(options.seed);
        for (auto& v : w) v = options.init_scale * rng.normal();
    }

    TrainingTrace trace;
    std::deque<double> recent;
    double previous = std::numeric_limits<double>::infinity();
    int rising = 0;
    for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
        const auto lg = loss_and_gradient(ds, w, b, options.l2);
        double norm = 0.0;
        for (double g : lg.grad) norm += g * g;
        norm = std::sqrt(norm);
        trace.epochs = epoch;
        trace.final_loss = lg.loss;
        trace.final_gradient_norm = norm;

        if (!std::isfinite(lg.loss)) fail(ErrorKind::Training, "loss became non-finite at epoch " + std::to_string(epoch));
        recent.push_back(lg.loss);
        if (recent.size() > 12) recent.pop_front();
        rising = lg.loss > previous ? rising + 1 : 0;
        previous = lg.loss;
        if (rising >= 10) {
            std::ostringstream msg;
            msg << "training diverged: loss increased for 10 consecutive epochs (epoch " << epoch << "); recent losses:";
            for (double l : recent) msg << ' ' << l;
            fail(ErrorKind::Training, msg.str());
        }
        if (norm < options.gradient_tolerance) {
            trace.converged = true;
            break;
        }
        for (std::size_t c = 0; c < d; ++c) w[c] -= options.learning_rate * lg.grad[c];
        b -= options.learning_rate * lg.grad[d];
    }

    LinearClassifier model(ds.columns, ds.means, ds.stddevs, std::move(w), b, options);
    model.set_trace(trace);
    return model;
}

double accuracy(const LinearClassifier& model, const data::PreparedDataset& ds, Split split) {
    std::size_t n = 0, hit = 0;
    for (std::size_t i = 0; i < ds.x.size(); ++i) {
        if (ds.split[i] != split) continue;
        ++n;
        hit += model.predict(ds.x[i]) == ds.y[i] ? 1 : 0;
    }
    if (n == 0) fail(ErrorKind::Parameter, "split is empty");
    return static_cast<double>(hit) / static_cast<double>(n);
}

std::vector<RankedAttribute> rank_attributes(const LinearClassifier& model) {
    std::vector<RankedAttribute> ranked;
    for (std::size_t c = 0; c < model.columns().size(); ++c) {
        const auto& attr = model.columns()[c].attribute;
        auto it = std::find_if(ranked.begin(), ranked.end(), [&](const auto& r) { return r.attribute == attr; });
        const double mag = std::abs(model.weights()[c]);
        if (it == ranked.end()) {
            ranked.push_back({attr, mag});
        } else {
            it->importance = std::max(it->importance, mag);
        }
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.importance > b.importance; });
    return ranked;
}

std::vector<std::string> rank_and_select_features(const LinearClassifier& model, std::size_t k) {
    const auto ranked = rank_attributes(model);
    if (k > ranked.size()) {
        fail(ErrorKind::Parameter, "cannot select " + std::to_string(k) + " of " + std::to_string(ranked.size()) +
                                       " features");
    }
    if (k == ranked.size()) return model.attributes();
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].attribute);
    return out;
}

std::vector<std::string> missing_attributes(const std::vector<std::string>& selected,
                                            const std::vector<std::string>& reference) {
    std::vector<std::string> missing;
    for (const auto& r : reference) {
        if (std::find(selected.begin(), selected.end(), r) == selected.end()) missing.push_back(r);
    }
    return missing;
}

const std::vector<std::string>& reference_top10() {
    static const std::vector<std::string> kTop10 = {"Medu",     "Fedu",   "Mjob",  "Fjob",      "studytime",
                                                    "higher",   "goout",  "absences", "schoolsup", "failures"};
    return kTop10;
}

const std::vector<std::string>& complementary_attributes() {
    static const std::vector<std::string> kHeldOut = {"studytime", "goout", "schoolsup"};
    return kHeldOut;
}

std::vector<std::string> without(const std::vector<std::string>& list, const std::vector<std::string>& removed) {
    std::vector<std::string> out;
    for (const auto& a : list) {
        if (std::find(removed.begin(), removed.end(), a) == removed.end()) out.push_back(a);
    }
    return out;
}

const char* to_string(ConfidenceBin b) noexcept { return b == ConfidenceBin::Low ? "low" : "high"; }

AiAdvice advise(double p, double confidence_threshold, bool flip) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::Parameter, "model probability must lie in [0, 1]");
    AiAdvice a;
    a.model_label = p >= 0.5 ? 1 : 0;
    a.confidence = std::max(p, 1.0 - p);
    a.bin = a.confidence >= confidence_threshold ? ConfidenceBin::High : ConfidenceBin::Low;
    a.predicted_label = a.model_label;
    return flip ? flip_advice(a) : a;
}

AiAdvice advise(const LinearClassifier& model, const std::vector<double>& standardized, double confidence_threshold,
                bool flip) {
    return advise(model.probability(standardized), confidence_threshold, flip);
}

AiAdvice flip_advice(const AiAdvice& advice) {
    AiAdvice a = advice;
    a.flipped = !a.flipped;
    a.predicted_label = 1 - a.predicted_label;
    return a;
}

Json to_json(const LinearClassifier& model, double confidence_threshold) {
    Json doc = make_document("linear_classifier");
    doc["intercept"] = model.intercept();
    doc["confidence_threshold"] = confidence_threshold;
    // Weights keyed by attribute; one-hot attributes nest per category.
    Json weights = Json::object();
    Json standardization = Json::object();
    for (std::size_t c = 0; c < model.columns().size(); ++c) {
        const auto& col = model.columns()[c];
        Json stats = {{"mean", model.means()[c]}, {"stddev", model.stddevs()[c]}};
        if (col.name == col.attribute) {
            weights[col.attribute] = model.weights()[c];
            standardization[col.attribute] = stats;
        } else {
            const auto category = col.name.substr(col.attribute.size() + 1);
            weights[col.attribute][category] = model.weights()[c];
            standardization[col.attribute][category] = stats;
        }
    }
    doc["weights"] = weights;
    doc["standardization"] = standardization;
    const auto& o = model.options();
    doc["hyperparameters"] = {{"learning_rate", o.learning_rate}, {"l2", o.l2},
                              {"max_epochs", o.max_epochs},       {"gradient_tolerance", o.gradient_tolerance},
                              {"init_scale", o.init_scale},       {"seed", o.seed}};
    const auto& t = model.trace();
    doc["training"] = {{"epochs", t.epochs},
                       {"final_loss", t.final_loss},
                       {"final_gradient_norm", t.final_gradient_norm},
                       {"converged", t.converged}};
    return doc;
}

LinearClassifier classifier_from_json(const Json& doc) {
    check_document(doc, "linear_classifier");
    std::vector<data::EncodedColumn> columns;
    std::vector<double> means, sds, weights;
    const auto& jw = require(doc, "weights");
    const auto& js = require(doc, "standardization");
    for (auto it = jw.begin(); it != jw.end(); ++it) {
        const std::string attr = it.key();
        if (!data::attribute_index(attr)) fail(ErrorKind::Config, "model references unknown attribute '" + attr + "'");
        const auto& stats = require(js, attr);
        if (it->is_object()) {
            for (auto ct = it->begin(); ct != it->end(); ++ct) {
                columns.push_back({attr + "=" + ct.key(), attr});
                weights.push_back(ct->get<double>());
                means.push_back(require_as<double>(require(stats, ct.key()), "mean"));
                sds.push_back(require_as<double>(require(stats, ct.key()), "stddev"));
            }
        } else {
            columns.push_back({attr, attr});
            weights.push_back(it->get<double>());
            means.push_back(require_as<double>(stats, "mean"));
            sds.push_back(require_as<double>(stats, "stddev"));
        }
    }
    TrainingOptions o;
    if (auto h = doc.find("hyperparameters"); h != doc.end()) {
        o.learning_rate = value_or(*h, "learning_rate", o.learning_rate);
        o.l2 = value_or(*h, "l2", o.l2);
        o.max_epochs = value_or(*h, "max_epochs", o.max_epochs);
        o.gradient_tolerance = value_or(*h, "gradient_tolerance", o.gradient_tolerance);
        o.init_scale = value_or(*h, "init_scale", o.init_scale);
        o.seed = value_or<std::uint64_t>(*h, "seed", o.seed);
    }
    LinearClassifier model(std::move(columns), std::move(means), std::move(sds), std::move(weights),
                           require_as<double>(doc, "intercept"), o);
    if (auto t = doc.find("training"); t != doc.end()) {
        TrainingTrace tr;
        tr.epochs = value_or(*t, "epochs", 0);
        tr.final_loss = value_or(*t, "final_loss", 0.0);
        tr.final_gradient_norm = value_or(*t, "final_gradient_norm", 0.0);
        tr.converged = value_or(*t, "converged", false);
        model.set_trace(tr);
    }
    return model;
}

}  // namespace deanchor::model
