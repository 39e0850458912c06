#pragma once

// Seeded Monte Carlo replications of the two experiments: trial selection,
// per-participant session plans, simulated anchored agents, and stratified
// accuracy/agreement metrics.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "deanchor/agreement.hpp"
#include "deanchor/allocation.hpp"
#include "deanchor/classifier.hpp"
#include "deanchor/response_model.hpp"
#include "deanchor/student_data.hpp"

namespace deanchor::sim {

using alloc::PolicyKind;

struct DataConfig {
    std::filesystem::path dir = "data/surrogate";
    std::uint64_t split_seed = 3;
    int pass_threshold = 10;
    double train_fraction = 0.7;
};

struct AgentConfig {
    double alpha = 1.0;
    double gamma = 1.0;
    double temperature = 1.0;
    double ai_accuracy = 0.85;  // the announced accuracy the agent believes
    double pseudocount = 1.0;
    double beta_min = 0.0;
    double beta_max = 50.0;
    bias::TieRule tie_rule{};

    bias::BiasProfile profile(double beta) const;
};

// Everything derived from the dataset: split, the two assisting models,
// and the agent's subjective model over the human-visible features.
struct World {
    DataConfig data;
    std::vector<data::RawStudentRecord> records;
    data::PreparedDataset dataset;  // all attributes
    model::LinearClassifier full_model;
    model::LinearClassifier model10;
    model::LinearClassifier model7;
    std::vector<std::string> human_features;  // the ten displayed attributes
    bias::SubjectiveModel agent_model;
    double confidence_threshold = model::kDefaultConfidenceThreshold;
};

World build_world(const DataConfig& data, const AgentConfig& agent,
                  const model::TrainingOptions& training = {});

// Discrete value of a human-visible attribute (absences are binned).
int human_feature_value(const data::RawStudentRecord& record, const std::string& attribute);
std::vector<bias::FeatureSpec> human_feature_specs(const std::vector<std::string>& attributes);

struct TrialSpec {
    int id = 0;
    std::size_t record = 0;       // index into World::records
    bias::Observation obs;        // human features + shown prediction
    int true_label = 0;
    int shown_prediction = 0;
    double model_probability = 0.5;  // P(pass) from the assisting model
    double confidence = 0.5;
    model::ConfidenceBin bin = model::ConfidenceBin::Low;
    bool probe = false;
    std::string stratum;          // predicted-probability interval label

    bool ai_correct() const { return shown_prediction == true_label; }
};

struct Block {
    double seconds = 0.0;
    std::vector<int> trials;  // indices into the design's trial list
};

struct SessionPlan {
    PolicyKind group = PolicyKind::Constant;
    std::uint64_t permutation_seed = 0;
    std::vector<Block> blocks;

    std::size_t trial_count() const;
    double mean_seconds() const;
};

struct Interval {
    double lo = 0.0;  // exclusive unless lo_closed
    double hi = 1.0;  // inclusive
    bool lo_closed = false;

    bool contains(double x) const { return (lo_closed ? x >= lo : x > lo) && x <= hi; }
    std::string label() const;
};

class Experiment1Design {
public:
    static constexpr int kProbes = 8;
    static constexpr int kUnmodified = 28;
    static constexpr int kBlocks = 4;
    static constexpr std::array<double, 4> kBlockSeconds = {10, 15, 20, 25};

    // Probes: model correct, confidence in (0.6, 0.8], shown prediction
    // flipped. Unmodified: 28 stratified over five confidence intervals.
    Experiment1Design(const World& world, std::uint64_t seed);

    const std::vector<TrialSpec>& trials() const noexcept { return trials_; }
    // Trial order shared by all participants; times permuted per participant.
    SessionPlan plan(std::uint64_t participant_seed) const;

    std::vector<bias::WeightedObservation> probe_observations() const;
    static const std::vector<Interval>& strata();
    static std::vector<int> stratum_quota();

private:
    std::vector<TrialSpec> trials_;
    std::vector<std::vector<int>> blocks_;
};

class Experiment2Design {
public:
    static constexpr int kPerBin = 20;
    static constexpr int kBlocks = 8;
    static constexpr int kBlockSize = 5;

    struct Times {
        double human_only = 25.0;
        double constant = 17.5;
        double t_low = 25.0;
        double t_high = 10.0;
    };

    Experiment2Design(const World& world, std::uint64_t seed);
    Experiment2Design(const World& world, std::uint64_t seed, Times times);

    const std::vector<TrialSpec>& trials() const noexcept { return trials_; }
    const Times& times() const noexcept { return times_; }
    SessionPlan plan(PolicyKind group, std::uint64_t participant_seed) const;

private:
    std::vector<TrialSpec> trials_;
    Times times_;
};

enum class SelfConfidence { Low, Medium, High, None };
const char* to_string(SelfConfidence c) noexcept;
SelfConfidence self_confidence_from_string(const std::string& s);

struct TrialRecord {
    std::string session;
    std::string group;
    int trial = 0;
    double allocated = 0.0;
    int decision = 0;
    bool correct = false;
    std::optional<bool> agree;  // absent when no AI prediction was shown
    double elapsed = 0.0;                  // server time on the trial, dispatch to advance
    std::optional<double> answer_latency;  // dispatch to the standing answer (live sessions)
    SelfConfidence self_confidence = SelfConfidence::None;
    model::ConfidenceBin bin = model::ConfidenceBin::Low;
    bool ai_correct = false;
    bool probe = false;
    std::optional<double> client_elapsed;
};

Json to_json(const TrialRecord& r);
TrialRecord trial_record_from_json(const Json& j);

// Integer counters per cell; everything else derives from them, so
// aggregation is exact and independent of order.
struct CellCounts {
    std::uint64_t sessions = 0;  // sessions with at least one trial here
    std::uint64_t n = 0;
    std::uint64_t correct = 0;
    std::uint64_t agree = 0;
    std::uint64_t sum_n2 = 0;
    std::uint64_t sum_c2 = 0;
    std::uint64_t sum_cn = 0;
    std::uint64_t sum_a2 = 0;
    std::uint64_t sum_an = 0;

    void add_session(std::uint64_t n_s, std::uint64_t correct_s, std::uint64_t agree_s);
    void merge(const CellCounts& other);
    bool operator==(const CellCounts&) const = default;

    std::optional<double> accuracy() const;
    std::optional<double> accuracy_se() const;
    std::optional<double> agreement() const;
    std::optional<double> agreement_se() const;
};

struct GroupMetrics {
    std::string group;
    bool has_ai = true;
    std::map<std::string, CellCounts> cells;

    bool operator==(const GroupMetrics&) const = default;
};

struct StratifiedMetrics {
    std::string experiment;
    std::uint64_t seed = 0;
    std::uint64_t replications = 0;
    std::vector<GroupMetrics> groups;

    const GroupMetrics* group(const std::string& name) const;
    bool operator==(const StratifiedMetrics&) const = default;
};

// Fixed stratum order first, then per-time cells.
inline constexpr std::array<const char*, 5> kStrata = {"overall", "low_wrong", "high_wrong", "high_correct",
                                                       "low_correct"};
std::vector<std::string> ordered_cells(const GroupMetrics& g);

// Folds one session's records into a group's cells. Every session
// contributes to all five strata (empty ones stay empty).
class MetricsAccumulator {
public:
    explicit MetricsAccumulator(std::string experiment = "session", bool per_time_cells = false)
        : experiment_(std::move(experiment)), per_time_(per_time_cells) {}

    void add_session(const std::vector<TrialRecord>& records);
    void merge(const MetricsAccumulator& other);
    StratifiedMetrics finish(std::uint64_t seed, std::uint64_t replications,
                             const std::vector<std::string>& group_order = {}) const;

private:
    std::string experiment_;
    bool per_time_;
    std::map<std::string, GroupMetrics> groups_;
};

// Re-aggregates a line-delimited TrialRecord log, one session per id.
StratifiedMetrics aggregate_log(std::istream& in, const std::string& experiment, bool per_time_cells);

struct RunOptions {
    std::uint64_t seed = 0;
    std::uint64_t replications = 1000;  // sessions per group
    unsigned threads = 1;
    AgentConfig agent;
    std::map<PolicyKind, response::BetaSchedule> schedules;  // per collaborative group
    std::vector<PolicyKind> groups;
    std::ostream* log = nullptr;  // JSONL trial records, if set
};

using PlanFactory = std::function<SessionPlan(PolicyKind, std::uint64_t)>;

// Simulates `replications` sessions per group. Deterministic in seed and
// independent of thread count. Throws Config when a collaborative group
// has no schedule.
StratifiedMetrics run(const std::string& experiment, const World& world, const std::vector<TrialSpec>& trials,
                      const PlanFactory& plans, const RunOptions& options, bool per_time_cells);

StratifiedMetrics run_experiment1(const World& world, const Experiment1Design& design, const RunOptions& options);
StratifiedMetrics run_experiment2(const World& world, const Experiment2Design& design, const RunOptions& options);

// Calibrates beta(t) on the experiment-1 probe trials.
response::BetaSchedule calibrate_on_probes(const World& world, const Experiment1Design& design,
                                           const AgentConfig& agent, const response::AgreementCurve& curve);

// Report rendering and parsing. All three carry the integer counters, so
// parsing any rendering reproduces the metrics exactly.
enum class Format { Json, Text, Csv };
Format format_from_string(const std::string& s);
const char* to_string(Format f) noexcept;

Json to_json(const StratifiedMetrics& m);
StratifiedMetrics metrics_from_json(const Json& doc);
std::string render(const StratifiedMetrics& m, Format f);
StratifiedMetrics parse(const std::string& text, Format f);

}  // namespace deanchor::sim
