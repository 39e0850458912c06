#include "deanchor/sim_harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "deanchor/error.hpp"
#include "deanchor/rng.hpp"

namespace deanchor::sim {

using model::ConfidenceBin;

bias::BiasProfile AgentConfig::profile(double beta) const {
    bias::BiasProfile p;
    p.alpha = alpha;
    p.beta = beta;
    p.gamma = gamma;
    p.tie_rule = tie_rule;
    return p;
}

// ---------------------------------------------------------------- world

int human_feature_value(const data::RawStudentRecord& record, const std::string& attribute) {
    const int v = record.at(attribute);
    if (attribute == "absences") return v == 0 ? 0 : v <= 5 ? 1 : v <= 15 ? 2 : 3;
    return v;
}

std::vector<bias::FeatureSpec> human_feature_specs(const std::vector<std::string>& attributes) {
    std::vector<bias::FeatureSpec> specs;
    for (const auto& name : attributes) {
        const auto idx = data::attribute_index(name);
        if (!idx) fail(ErrorKind::Config, "unknown attribute '" + name + "'");
        const auto& s = data::schema()[*idx];
        bias::FeatureSpec spec{name, {}};
        if (name == "absences") {
            spec.domain = {0, 1, 2, 3};
        } else if (s.kind == data::AttributeKind::Numeric) {
            for (int v = s.min; v <= s.max; ++v) spec.domain.push_back(v);
        } else {
            for (int v = 0; v < static_cast<int>(s.categories.size()); ++v) spec.domain.push_back(v);
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

namespace {

std::vector<int> human_values(const data::RawStudentRecord& r, const std::vector<std::string>& attrs) {
    std::vector<int> v;
    v.reserve(attrs.size());
    for (const auto& a : attrs) v.push_back(human_feature_value(r, a));
    return v;
}

}  // namespace

World build_world(const DataConfig& data, const AgentConfig& agent, const model::TrainingOptions& training) {
    World w;
    w.data = data;
    w.records = data::ingest_pooled(data.dir);
    data::PrepareOptions prep;
    prep.pass_threshold = data.pass_threshold;
    prep.split_seed = data.split_seed;
    prep.train_fraction = data.train_fraction;
    w.dataset = data::prepare(w.records, prep);

    w.full_model = model::train(w.dataset, training);
    const auto& top10 = model::reference_top10();
    w.model10 = model::train(w.dataset.select(top10), training);
    w.model7 = model::train(w.dataset.select(model::without(top10, model::complementary_attributes())), training);
    w.human_features = top10;

    std::vector<std::vector<int>> rows;
    std::vector<int> labels;
    for (std::size_t i = 0; i < w.dataset.y.size(); ++i) {
        if (w.dataset.split[i] != data::Split::Train) continue;
        rows.push_back(human_values(w.records[w.dataset.source_row[i]], w.human_features));
        labels.push_back(w.dataset.y[i]);
    }
    const double pass_rate =
        static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / static_cast<double>(labels.size());
    w.agent_model.prior = bias::LabelPrior(pass_rate);
    w.agent_model.likelihood = bias::FeatureLikelihoodTable::fit(human_feature_specs(w.human_features), rows, labels,
                                                                 agent.pseudocount);
    w.agent_model.ai = bias::AiOutputTable::from_accuracy(agent.ai_accuracy);
    return w;
}

// ---------------------------------------------------------------- designs

std::size_t SessionPlan::trial_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.trials.size();
    return n;
}

double SessionPlan::mean_seconds() const {
    double total = 0.0;
    for (const auto& b : blocks) total += b.seconds * static_cast<double>(b.trials.size());
    return total / static_cast<double>(trial_count());
}

std::string Interval::label() const {
    std::ostringstream s;
    s << (lo_closed ? "[" : "(") << lo << "," << hi << "]";
    return s.str();
}

namespace {

struct Candidate {
    std::size_t record;
    int label;
    model::AiAdvice advice;
    double p;
};

std::vector<Candidate> test_pool(const World& w, const model::LinearClassifier& m) {
    std::vector<Candidate> pool;
    for (std::size_t i = 0; i < w.dataset.y.size(); ++i) {
        if (w.dataset.split[i] != data::Split::Test) continue;
        const std::size_t r = w.dataset.source_row[i];
        const double p = m.probability(w.records[r]);
        pool.push_back({r, w.dataset.y[i], model::advise(p, w.confidence_threshold), p});
    }
    return pool;
}

std::vector<Candidate> take(std::vector<Candidate> candidates, std::size_t k, Rng& rng, const std::string& what) {
    if (candidates.size() < k) {
        std::ostringstream msg;
        msg << "insufficient pool for " << what << ": need " << k << ", have " << candidates.size();
        fail(ErrorKind::Sampling, msg.str());
    }
    rng.shuffle(std::span<Candidate>(candidates));
    candidates.resize(k);
    return candidates;
}

TrialSpec make_trial(const World& w, const Candidate& c, bool flip, const std::string& stratum) {
    TrialSpec t;
    t.record = c.record;
    t.true_label = c.label;
    const auto advice = flip ? model::flip_advice(c.advice) : c.advice;
    t.shown_prediction = advice.predicted_label;
    t.model_probability = c.p;
    t.confidence = advice.confidence;
    t.bin = advice.bin;
    t.probe = flip;
    t.stratum = stratum;
    t.obs.values = human_values(w.records[c.record], w.human_features);
    t.obs.ai_prediction = t.shown_prediction;
    return t;
}

template <typename T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
    rng.shuffle(std::span<T>(v));
}

}  // namespace

const std::vector<Interval>& Experiment1Design::strata() {
    static const std::vector<Interval> s = {
        {0.5, 0.6, true}, {0.6, 0.7, false}, {0.7, 0.8, false}, {0.8, 0.9, false}, {0.9, 1.0, false}};
    return s;
}

std::vector<int> Experiment1Design::stratum_quota() {
    // 28 over five intervals; the remainder goes to the lower intervals.
    const int k = static_cast<int>(strata().size());
    std::vector<int> q(static_cast<std::size_t>(k), kUnmodified / k);
    for (int i = 0; i < kUnmodified % k; ++i) ++q[static_cast<std::size_t>(i)];
    return q;
}

Experiment1Design::Experiment1Design(const World& world, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 1));
    const auto pool = test_pool(world, world.model10);
    const Interval probe_interval{0.6, 0.8, false};

    std::vector<Candidate> probe_candidates;
    for (const auto& c : pool) {
        if (c.advice.model_label == c.label && probe_interval.contains(c.advice.confidence)) probe_candidates.push_back(c);
    }
    const auto probes = take(probe_candidates, kProbes, rng, "probe trials in " + probe_interval.label());
    std::vector<std::size_t> used;
    for (const auto& p : probes) used.push_back(p.record);

    std::vector<TrialSpec> unmodified;
    const auto quota = stratum_quota();
    for (std::size_t s = 0; s < strata().size(); ++s) {
        std::vector<Candidate> cands;
        for (const auto& c : pool) {
            if (strata()[s].contains(c.advice.confidence) &&
                std::find(used.begin(), used.end(), c.record) == used.end()) {
                cands.push_back(c);
            }
        }
        for (const auto& c : take(cands, static_cast<std::size_t>(quota[s]), rng,
                                  "unmodified trials in " + strata()[s].label())) {
            unmodified.push_back(make_trial(world, c, false, strata()[s].label()));
        }
    }
    std::vector<TrialSpec> probe_trials;
    for (const auto& c : probes) probe_trials.push_back(make_trial(world, c, true, probe_interval.label()));
    shuffle_vec(probe_trials, rng);
    shuffle_vec(unmodified, rng);

    const int per_block_probe = kProbes / kBlocks;
    const int per_block_unmod = kUnmodified / kBlocks;
    for (int b = 0; b < kBlocks; ++b) {
        std::vector<TrialSpec> block;
        for (int i = 0; i < per_block_probe; ++i) block.push_back(probe_trials[static_cast<std::size_t>(b * per_block_probe + i)]);
        for (int i = 0; i < per_block_unmod; ++i) block.push_back(unmodified[static_cast<std::size_t>(b * per_block_unmod + i)]);
        shuffle_vec(block, rng);
        std::vector<int> ids;
        for (auto& t : block) {
            t.id = static_cast<int>(trials_.size());
            ids.push_back(t.id);
            trials_.push_back(std::move(t));
        }
        blocks_.push_back(std::move(ids));
    }
}

SessionPlan Experiment1Design::plan(std::uint64_t participant_seed) const {
    Rng rng(participant_seed);
    std::array<double, 4> times = kBlockSeconds;
    rng.shuffle(std::span<double>(times));
    SessionPlan plan;
    plan.group = PolicyKind::Constant;
    plan.permutation_seed = participant_seed;
    for (std::size_t b = 0; b < blocks_.size(); ++b) plan.blocks.push_back({times[b], blocks_[b]});
    return plan;
}

std::vector<bias::WeightedObservation> Experiment1Design::probe_observations() const {
    std::vector<bias::WeightedObservation> out;
    for (const auto& t : trials_) {
        if (t.probe) out.push_back({t.obs, 1.0 / kProbes});
    }
    return out;
}

Experiment2Design::Experiment2Design(const World& world, std::uint64_t seed)
    : Experiment2Design(world, seed, Times{}) {}

Experiment2Design::Experiment2Design(const World& world, std::uint64_t seed, Times times) : times_(times) {
    Rng rng(derive_seed(seed, 2));
    const auto pool = test_pool(world, world.model7);
    std::vector<Candidate> low, high;
    for (const auto& c : pool) (c.advice.bin == ConfidenceBin::Low ? low : high).push_back(c);
    for (const auto& c : take(low, kPerBin, rng, "C_L trials (confidence < 0.75)")) {
        trials_.push_back(make_trial(world, c, false, "C_L"));
    }
    for (const auto& c : take(high, kPerBin, rng, "C_H trials (confidence >= 0.75)")) {
        trials_.push_back(make_trial(world, c, false, "C_H"));
    }
    for (std::size_t i = 0; i < trials_.size(); ++i) trials_[i].id = static_cast<int>(i);
}

SessionPlan Experiment2Design::plan(PolicyKind group, std::uint64_t participant_seed) const {
    Rng rng(participant_seed);
    // Blocks are homogeneous in confidence bin so that a confidence policy
    // can give one time per block: C_L trials 0..19, C_H trials 20..39.
    std::vector<int> low(kPerBin), high(kPerBin);
    for (int i = 0; i < kPerBin; ++i) {
        low[static_cast<std::size_t>(i)] = i;
        high[static_cast<std::size_t>(i)] = kPerBin + i;
    }
    shuffle_vec(low, rng);
    shuffle_vec(high, rng);
    struct Pending {
        bool is_low;
        std::vector<int> ids;
    };
    std::vector<Pending> blocks;
    for (int b = 0; b < kBlocks / 2; ++b) {
        blocks.push_back({true, {low.begin() + b * kBlockSize, low.begin() + (b + 1) * kBlockSize}});
        blocks.push_back({false, {high.begin() + b * kBlockSize, high.begin() + (b + 1) * kBlockSize}});
    }
    shuffle_vec(blocks, rng);

    std::vector<double> random_times;
    if (group == PolicyKind::Random) {
        random_times = alloc::random_assignment(alloc::AllocationPolicy::random(times_.t_low, times_.t_high), kBlocks,
                                                0.5, rng);
    }
    SessionPlan plan;
    plan.group = group;
    plan.permutation_seed = participant_seed;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        double seconds = 0.0;
        switch (group) {
            case PolicyKind::HumanOnly: seconds = times_.human_only; break;
            case PolicyKind::Constant: seconds = times_.constant; break;
            case PolicyKind::Random: seconds = random_times[b]; break;
            case PolicyKind::ConfidenceBased:
            case PolicyKind::ConfidenceBasedExplained: seconds = blocks[b].is_low ? times_.t_low : times_.t_high; break;
        }
        plan.blocks.push_back({seconds, blocks[b].ids});
    }
    return plan;
}

// ---------------------------------------------------------------- records

const char* to_string(SelfConfidence c) noexcept {
    switch (c) {
        case SelfConfidence::Low: return "low";
        case SelfConfidence::Medium: return "medium";
        case SelfConfidence::High: return "high";
        case SelfConfidence::None: return "none";
    }
    return "none";
}

SelfConfidence self_confidence_from_string(const std::string& s) {
    if (s == "low") return SelfConfidence::Low;
    if (s == "medium") return SelfConfidence::Medium;
    if (s == "high") return SelfConfidence::High;
    if (s == "none") return SelfConfidence::None;
    fail(ErrorKind::Validation, "self-confidence must be low, medium or high, got '" + s + "'");
}

Json to_json(const TrialRecord& r) {
    Json j;
    j["session"] = r.session;
    j["group"] = r.group;
    j["trial"] = r.trial;
    j["allocated"] = r.allocated;
    j["decision"] = r.decision;
    j["correct"] = r.correct;
    if (r.agree) j["agree"] = *r.agree;
    j["elapsed"] = r.elapsed;
    if (r.answer_latency) j["answer_latency"] = *r.answer_latency;
    j["self_confidence"] = to_string(r.self_confidence);
    j["bin"] = model::to_string(r.bin);
    j["ai_correct"] = r.ai_correct;
    j["probe"] = r.probe;
    if (r.client_elapsed) j["client_elapsed"] = *r.client_elapsed;
    return j;
}

TrialRecord trial_record_from_json(const Json& j) {
    TrialRecord r;
    r.session = require_as<std::string>(j, "session");
    r.group = require_as<std::string>(j, "group");
    r.trial = require_as<int>(j, "trial");
    r.allocated = require_as<double>(j, "allocated");
    r.decision = require_as<int>(j, "decision");
    r.correct = require_as<bool>(j, "correct");
    if (j.contains("agree")) r.agree = j["agree"].get<bool>();
    r.elapsed = require_as<double>(j, "elapsed");
    if (j.contains("answer_latency")) r.answer_latency = j["answer_latency"].get<double>();
    r.self_confidence = self_confidence_from_string(require_as<std::string>(j, "self_confidence"));
    r.bin = require_as<std::string>(j, "bin") == "high" ? ConfidenceBin::High : ConfidenceBin::Low;
    r.ai_correct = require_as<bool>(j, "ai_correct");
    r.probe = value_or<bool>(j, "probe", false);
    if (j.contains("client_elapsed")) r.client_elapsed = j["client_elapsed"].get<double>();
    return r;
}

// ---------------------------------------------------------------- metrics

void CellCounts::add_session(std::uint64_t n_s, std::uint64_t c_s, std::uint64_t a_s) {
    if (n_s == 0) return;
    ++sessions;
    n += n_s;
    correct += c_s;
    agree += a_s;
    sum_n2 += n_s * n_s;
    sum_c2 += c_s * c_s;
    sum_cn += c_s * n_s;
    sum_a2 += a_s * a_s;
    sum_an += a_s * n_s;
}

void CellCounts::merge(const CellCounts& o) {
    sessions += o.sessions;
    n += o.n;
    correct += o.correct;
    agree += o.agree;
    sum_n2 += o.sum_n2;
    sum_c2 += o.sum_c2;
    sum_cn += o.sum_cn;
    sum_a2 += o.sum_a2;
    sum_an += o.sum_an;
}

namespace {

// Cluster (per-session) ratio-estimator standard error.
std::optional<double> ratio_se(std::uint64_t m, std::uint64_t n, std::uint64_t k, std::uint64_t sk2,
                               std::uint64_t skn, std::uint64_t sn2) {
    if (m < 2 || n == 0) return std::nullopt;
    const double N = static_cast<double>(n);
    const double R = static_cast<double>(k) / N;
    const double ss = static_cast<double>(sk2) - 2.0 * R * static_cast<double>(skn) + R * R * static_cast<double>(sn2);
    const double md = static_cast<double>(m);
    return std::sqrt(std::max(0.0, md / (md - 1.0) * ss) / (N * N));
}

}  // namespace

std::optional<double> CellCounts::accuracy() const {
    if (n == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::optional<double> CellCounts::accuracy_se() const { return ratio_se(sessions, n, correct, sum_c2, sum_cn, sum_n2); }

std::optional<double> CellCounts::agreement() const {
    if (n == 0) return std::nullopt;
    return static_cast<double>(agree) / static_cast<double>(n);
}

std::optional<double> CellCounts::agreement_se() const { return ratio_se(sessions, n, agree, sum_a2, sum_an, sum_n2); }

const GroupMetrics* StratifiedMetrics::group(const std::string& name) const {
    for (const auto& g : groups) {
        if (g.group == name) return &g;
    }
    return nullptr;
}

namespace {

std::string seconds_label(double s) {
    std::ostringstream out;
    out << s;
    return out.str();
}

std::string stratum_of(const TrialRecord& r) {
    const bool low = r.bin == ConfidenceBin::Low;
    if (r.ai_correct) return low ? "low_correct" : "high_correct";
    return low ? "low_wrong" : "high_wrong";
}

}  // namespace

std::vector<std::string> ordered_cells(const GroupMetrics& g) {
    std::vector<std::string> out;
    for (const char* s : kStrata) {
        if (g.cells.count(s)) out.push_back(s);
    }
    std::vector<std::string> rest;
    for (const auto& [name, _] : g.cells) {
        if (std::find(out.begin(), out.end(), name) == out.end()) rest.push_back(name);
    }
    std::sort(rest.begin(), rest.end(), [](const std::string& a, const std::string& b) {
        const auto pa = a.find('@'), pb = b.find('@');
        const std::string ka = a.substr(0, pa), kb = b.substr(0, pb);
        if (ka != kb) return ka < kb;
        if (pa == std::string::npos || pb == std::string::npos) return a < b;
        return std::stod(a.substr(pa + 1)) < std::stod(b.substr(pb + 1));
    });
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

void MetricsAccumulator::add_session(const std::vector<TrialRecord>& records) {
    if (records.empty()) return;
    const std::string& group = records.front().group;
    auto& g = groups_[group];
    g.group = group;
    g.has_ai = records.front().agree.has_value();

    struct Tally {
        std::uint64_t n = 0, c = 0, a = 0;
    };
    std::map<std::string, Tally> tallies;
    for (const char* s : kStrata) tallies[s];
    for (const auto& r : records) {
        if (r.group != group) fail(ErrorKind::State, "session '" + r.session + "' mixes groups");
        if (r.agree.has_value() != g.has_ai) fail(ErrorKind::State, "session '" + r.session + "' mixes AI visibility");
        std::vector<std::string> keys = {"overall", stratum_of(r)};
        if (per_time_) keys.push_back(std::string(r.probe ? "probe" : "unmodified") + "@" + seconds_label(r.allocated));
        for (const auto& k : keys) {
            auto& t = tallies[k];
            ++t.n;
            t.c += r.correct ? 1 : 0;
            t.a += r.agree.value_or(false) ? 1 : 0;
        }
    }
    for (const auto& [k, t] : tallies) g.cells[k].add_session(t.n, t.c, t.a);
}

void MetricsAccumulator::merge(const MetricsAccumulator& other) {
    for (const auto& [name, og] : other.groups_) {
        auto& g = groups_[name];
        g.group = og.group;
        g.has_ai = og.has_ai;
        for (const auto& [cell, counts] : og.cells) g.cells[cell].merge(counts);
    }
}

StratifiedMetrics MetricsAccumulator::finish(std::uint64_t seed, std::uint64_t replications,
                                             const std::vector<std::string>& group_order) const {
    StratifiedMetrics m;
    m.experiment = experiment_;
    m.seed = seed;
    m.replications = replications;
    for (const auto& name : group_order) {
        auto it = groups_.find(name);
        if (it != groups_.end()) m.groups.push_back(it->second);
    }
    for (const auto& [name, g] : groups_) {
        if (std::find(group_order.begin(), group_order.end(), name) == group_order.end()) m.groups.push_back(g);
    }
    return m;
}

StratifiedMetrics aggregate_log(std::istream& in, const std::string& experiment, bool per_time_cells) {
    std::map<std::string, std::vector<TrialRecord>> sessions;
    std::vector<std::string> order;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            fail(ErrorKind::Data, "trial log line " + std::to_string(lineno) + " is not JSON: " + e.what());
        }
        auto r = trial_record_from_json(j);
        if (!sessions.count(r.session)) order.push_back(r.session);
        sessions[r.session].push_back(std::move(r));
    }
    MetricsAccumulator acc(experiment, per_time_cells);
    for (const auto& id : order) acc.add_session(sessions[id]);
    return acc.finish(0, order.size());
}

// ---------------------------------------------------------------- simulation

namespace {

// |log ratio| cut points for the low/medium/high self-report, from the
// rational posterior over the trial set.
std::pair<double, double> tercile_cutpoints(const World& world, const std::vector<TrialSpec>& trials, bool with_ai) {
    std::vector<double> mags;
    for (const auto& t : trials) {
        bias::Observation obs = t.obs;
        if (!with_ai) obs.ai_prediction.reset();
        mags.push_back(std::abs(bias::posterior_log_ratio(bias::BiasProfile::rational(), world.agent_model, obs)));
    }
    std::sort(mags.begin(), mags.end());
    const std::size_t n = mags.size();
    return {mags[n / 3], mags[(2 * n) / 3]};
}

struct Chunk {
    MetricsAccumulator acc;
    std::string log;
};

}  // namespace

StratifiedMetrics run(const std::string& experiment, const World& world, const std::vector<TrialSpec>& trials,
                      const PlanFactory& plans, const RunOptions& options, bool per_time_cells) {
    if (options.replications == 0) fail(ErrorKind::Parameter, "replications must be at least 1");
    if (!(options.agent.temperature >= 0.0)) fail(ErrorKind::Parameter, "temperature must be nonnegative");
    for (auto g : options.groups) {
        if (g != PolicyKind::HumanOnly && !options.schedules.count(g)) {
            fail(ErrorKind::Config, std::string("no calibrated beta schedule for group '") + alloc::to_string(g) + "'");
        }
    }
    const unsigned threads = std::max(1u, options.threads);
    MetricsAccumulator total(experiment, per_time_cells);
    std::vector<std::string> order;

    for (std::size_t gi = 0; gi < options.groups.size(); ++gi) {
        const PolicyKind group = options.groups[gi];
        const bool with_ai = group != PolicyKind::HumanOnly;
        const std::string name = alloc::to_string(group);
        order.push_back(name);
        const auto cuts = tercile_cutpoints(world, trials, with_ai);
        const response::BetaSchedule* schedule = with_ai ? &options.schedules.at(group) : nullptr;

        auto simulate_session = [&](std::uint64_t s, Chunk& chunk) {
            const std::uint64_t session_seed = derive_seed(options.seed, (static_cast<std::uint64_t>(gi) << 40) | s);
            const SessionPlan plan = plans(group, derive_seed(session_seed, 1));
            const std::string session_id = name + "-" + std::to_string(s);
            std::vector<TrialRecord> records;
            records.reserve(plan.trial_count());
            for (const auto& block : plan.blocks) {
                const double beta = schedule ? schedule->at(block.seconds) : 0.0;
                const auto profile = options.agent.profile(beta);
                for (int id : block.trials) {
                    const TrialSpec& t = trials[static_cast<std::size_t>(id)];
                    bias::Observation obs = t.obs;
                    if (!with_ai) obs.ai_prediction.reset();
                    const auto d = bias::simulate_decision(profile, world.agent_model, obs, options.agent.temperature,
                                                           derive_seed(session_seed, 1000 + static_cast<std::uint64_t>(id)));
                    TrialRecord r;
                    r.session = session_id;
                    r.group = name;
                    r.trial = id;
                    r.allocated = block.seconds;
                    r.elapsed = block.seconds;  // forced duration
                    r.decision = d.label;
                    r.correct = d.label == t.true_label;
                    if (with_ai) r.agree = d.label == t.shown_prediction;
                    const double mag = std::abs(d.log_ratio);
                    r.self_confidence = mag < cuts.first    ? SelfConfidence::Low
                                        : mag < cuts.second ? SelfConfidence::Medium
                                                            : SelfConfidence::High;
                    r.bin = t.bin;
                    r.ai_correct = t.ai_correct();
                    r.probe = t.probe;
                    records.push_back(std::move(r));
                }
            }
            if (options.log) {
                for (const auto& r : records) chunk.log += to_json(r).dump() + "\n";
            }
            chunk.acc.add_session(records);
        };

        // Contiguous session ranges; merged and logged in range order so the
        // result does not depend on scheduling.
        const std::uint64_t n_chunks = std::min<std::uint64_t>(options.replications, threads * 4ULL);
        std::vector<Chunk> chunks(n_chunks, Chunk{MetricsAccumulator(experiment, per_time_cells), {}});
        std::vector<std::exception_ptr> errors(n_chunks);
        auto work = [&](std::uint64_t c) {
            try {
                const std::uint64_t lo = options.replications * c / n_chunks;
                const std::uint64_t hi = options.replications * (c + 1) / n_chunks;
                for (std::uint64_t s = lo; s < hi; ++s) simulate_session(s, chunks[c]);
            } catch (...) {
                errors[c] = std::current_exception();
            }
        };
        if (threads == 1) {
            for (std::uint64_t c = 0; c < n_chunks; ++c) work(c);
        } else {
            std::mutex m;
            std::uint64_t next = 0;
            std::vector<std::thread> pool;
            for (unsigned t = 0; t < threads; ++t) {
                pool.emplace_back([&] {
                    for (;;) {
                        std::uint64_t c;
                        {
                            std::lock_guard lock(m);
                            if (next >= n_chunks) return;
                            c = next++;
                        }
                        work(c);
                    }
                });
            }
            for (auto& th : pool) th.join();
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
        for (auto& c : chunks) {
            total.merge(c.acc);
            if (options.log) *options.log << c.log;
        }
    }
    return total.finish(options.seed, options.replications, order);
}

StratifiedMetrics run_experiment1(const World& world, const Experiment1Design& design, const RunOptions& options) {
    RunOptions opts = options;
    if (opts.groups.empty()) opts.groups = {PolicyKind::Constant};
    const PlanFactory plans = [&design](PolicyKind, std::uint64_t seed) { return design.plan(seed); };
    return run("experiment1", world, design.trials(), plans, opts, true);
}

StratifiedMetrics run_experiment2(const World& world, const Experiment2Design& design, const RunOptions& options) {
    RunOptions opts = options;
    if (opts.groups.empty()) {
        opts.groups = {PolicyKind::HumanOnly, PolicyKind::Constant, PolicyKind::Random, PolicyKind::ConfidenceBased,
                       PolicyKind::ConfidenceBasedExplained};
    }
    const PlanFactory plans = [&design](PolicyKind g, std::uint64_t seed) { return design.plan(g, seed); };
    return run("experiment2", world, design.trials(), plans, opts, false);
}

response::BetaSchedule calibrate_on_probes(const World& world, const Experiment1Design& design,
                                           const AgentConfig& agent, const response::AgreementCurve& curve) {
    response::CalibrationSetup setup;
    setup.base = agent.profile(1.0);
    setup.model = world.agent_model;
    setup.temperature = agent.temperature;
    setup.trials = design.probe_observations();
    setup.beta_min = agent.beta_min;
    setup.beta_max = agent.beta_max;
    setup.branch = response::CurveBranch::AiWrong;
    return response::calibrate_beta(curve, setup);
}

// ---------------------------------------------------------------- reports

Format format_from_string(const std::string& s) {
    if (s == "json") return Format::Json;
    if (s == "text") return Format::Text;
    if (s == "csv") return Format::Csv;
    fail(ErrorKind::Config, "unknown format '" + s + "' (expected json, text or csv)");
}

const char* to_string(Format f) noexcept {
    switch (f) {
        case Format::Json: return "json";
        case Format::Text: return "text";
        case Format::Csv: return "csv";
    }
    return "json";
}

namespace {

Json opt(std::optional<double> v) { return v ? Json(*v) : Json(nullptr); }

const std::array<const char*, 9> kCounterNames = {"sessions", "n",      "correct", "agree", "sum_n2",
                                                  "sum_c2",   "sum_cn", "sum_a2",  "sum_an"};

std::array<std::uint64_t*, 9> counters(CellCounts& c) {
    return {&c.sessions, &c.n, &c.correct, &c.agree, &c.sum_n2, &c.sum_c2, &c.sum_cn, &c.sum_a2, &c.sum_an};
}

std::array<std::uint64_t, 9> counters(const CellCounts& c) {
    return {c.sessions, c.n, c.correct, c.agree, c.sum_n2, c.sum_c2, c.sum_cn, c.sum_a2, c.sum_an};
}

std::string fmt(std::optional<double> v, bool applicable, int precision) {
    if (!applicable) return "n/a";
    if (!v) return "null";
    std::ostringstream s;
    s << std::setprecision(precision) << (precision < 17 ? std::fixed : std::defaultfloat) << *v;
    return s.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    if (sep == ' ') {
        std::istringstream in(line);
        std::string tok;
        while (in >> tok) out.push_back(tok);
        return out;
    }
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::Data, "malformed " + what + " '" + s + "' in metrics report");
    }
}

// Row layout shared by the text and CSV renderings.
const std::vector<std::string>& row_header() {
    static const std::vector<std::string> h = [] {
        std::vector<std::string> v = {"group", "has_ai", "cell"};
        for (const char* c : kCounterNames) v.emplace_back(c);
        for (const char* c : {"accuracy", "accuracy_se", "agreement", "agreement_se"}) v.emplace_back(c);
        return v;
    }();
    return h;
}

std::vector<std::string> row_values(const GroupMetrics& g, const std::string& cell, int precision) {
    const CellCounts& c = g.cells.at(cell);
    std::vector<std::string> v = {g.group, g.has_ai ? "yes" : "no", cell};
    for (auto x : counters(c)) v.push_back(std::to_string(x));
    v.push_back(fmt(c.accuracy(), true, precision));
    v.push_back(fmt(c.accuracy_se(), true, precision));
    v.push_back(fmt(c.agreement(), g.has_ai, precision));
    v.push_back(fmt(c.agreement_se(), g.has_ai, precision));
    return v;
}

void apply_row(StratifiedMetrics& m, const std::vector<std::string>& v) {
    if (v.size() < 3 + kCounterNames.size()) fail(ErrorKind::Data, "metrics row has too few columns");
    GroupMetrics* g = nullptr;
    for (auto& x : m.groups) {
        if (x.group == v[0]) g = &x;
    }
    if (!g) {
        m.groups.push_back({v[0], v[1] == "yes", {}});
        g = &m.groups.back();
    }
    CellCounts& c = g->cells[v[2]];
    auto ptrs = counters(c);
    for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = parse_u64(v[3 + i], kCounterNames[i]);
}

}  // namespace

Json to_json(const StratifiedMetrics& m) {
    Json doc = make_document("metrics");
    doc["experiment"] = m.experiment;
    doc["seed"] = m.seed;
    doc["replications"] = m.replications;
    Json groups = Json::array();
    for (const auto& g : m.groups) {
        Json gj;
        gj["group"] = g.group;
        gj["has_ai"] = g.has_ai;
        Json cells = Json::array();
        for (const auto& name : ordered_cells(g)) {
            const auto& c = g.cells.at(name);
            Json cj;
            cj["cell"] = name;
            const auto vals = counters(c);
            for (std::size_t i = 0; i < vals.size(); ++i) cj[kCounterNames[i]] = vals[i];
            cj["accuracy"] = opt(c.accuracy());
            cj["accuracy_se"] = opt(c.accuracy_se());
            if (g.has_ai) {
                cj["agreement"] = opt(c.agreement());
                cj["agreement_se"] = opt(c.agreement_se());
            }
            cells.push_back(cj);
        }
        gj["cells"] = cells;
        groups.push_back(gj);
    }
    doc["groups"] = groups;
    return doc;
}

StratifiedMetrics metrics_from_json(const Json& doc) {
    check_document(doc, "metrics");
    StratifiedMetrics m;
    m.experiment = require_as<std::string>(doc, "experiment");
    m.seed = require_as<std::uint64_t>(doc, "seed");
    m.replications = require_as<std::uint64_t>(doc, "replications");
    for (const auto& gj : require(doc, "groups")) {
        GroupMetrics g;
        g.group = require_as<std::string>(gj, "group");
        g.has_ai = require_as<bool>(gj, "has_ai");
        for (const auto& cj : require(gj, "cells")) {
            CellCounts c;
            auto ptrs = counters(c);
            for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = require_as<std::uint64_t>(cj, kCounterNames[i]);
            g.cells[require_as<std::string>(cj, "cell")] = c;
        }
        m.groups.push_back(std::move(g));
    }
    return m;
}

std::string render(const StratifiedMetrics& m, Format f) {
    if (f == Format::Json) return to_json(m).dump(2) + "\n";
    std::ostringstream out;
    if (f == Format::Csv) {
        out << "experiment,seed,replications";
        for (const auto& h : row_header()) out << "," << h;
        out << "\n";
        for (const auto& g : m.groups) {
            for (const auto& cell : ordered_cells(g)) {
                out << m.experiment << "," << m.seed << "," << m.replications;
                for (const auto& v : row_values(g, cell, 17)) out << "," << v;
                out << "\n";
            }
        }
        return out.str();
    }
    out << "experiment " << m.experiment << "\n";
    out << "seed " << m.seed << "\n";
    out << "replications " << m.replications << "\n";
    std::vector<std::vector<std::string>> rows = {row_header()};
    for (const auto& g : m.groups) {
        for (const auto& cell : ordered_cells(g)) rows.push_back(row_values(g, cell, 4));
    }
    std::vector<std::size_t> width(row_header().size(), 0);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i > 0) out << "  ";
            if (i < 3) {
                out << std::left << std::setw(static_cast<int>(width[i])) << r[i];
            } else {
                out << std::right << std::setw(static_cast<int>(width[i])) << r[i];
            }
        }
        out << "\n";
    }
    return out.str();
}

StratifiedMetrics parse(const std::string& text, Format f) {
    if (f == Format::Json) {
        try {
            return metrics_from_json(Json::parse(text));
        } catch (const Json::exception& e) {
            fail(ErrorKind::Data, std::string("metrics report is not valid JSON: ") + e.what());
        }
    }
    StratifiedMetrics m;
    std::istringstream in(text);
    std::string line;
    if (f == Format::Csv) {
        if (!std::getline(in, line)) fail(ErrorKind::Data, "empty metrics report");
        bool first = true;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto v = split(line, ',');
            if (v.size() < 3) fail(ErrorKind::Data, "metrics row has too few columns");
            if (first) {
                m.experiment = v[0];
                m.seed = parse_u64(v[1], "seed");
                m.replications = parse_u64(v[2], "replications");
                first = false;
            }
            apply_row(m, std::vector<std::string>(v.begin() + 3, v.end()));
        }
        return m;
    }
    auto header_value = [&](const char* key) {
        if (!std::getline(in, line)) fail(ErrorKind::Data, std::string("metrics report lacks '") + key + "'");
        auto v = split(line, ' ');
        if (v.size() != 2 || v[0] != key) fail(ErrorKind::Data, std::string("expected '") + key + "' line");
        return v[1];
    };
    m.experiment = header_value("experiment");
    m.seed = parse_u64(header_value("seed"), "seed");
    m.replications = parse_u64(header_value("replications"), "replications");
    std::getline(in, line);  // column header
    while (std::getline(in, line)) {
        auto v = split(line, ' ');
        if (!v.empty()) apply_row(m, v);
    }
    return m;
}

}  // namespace deanchor::sim
