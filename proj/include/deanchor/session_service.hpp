#pragma once

// Live timed sessions: group assignment, trial dispatch with per-group AI
// advice, server-side timing, answer capture, and per-session metrics.
// Transport-independent; http_api.hpp mounts it on an HTTP server.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "deanchor/json_io.hpp"
#include "deanchor/sim_harness.hpp"

namespace deanchor::service {

using alloc::PolicyKind;

struct DisplayFeature {
    std::string attribute;
    std::string label;
    std::string value;
};

struct BankTrial {
    int id = 0;
    std::vector<DisplayFeature> features;
    int true_label = 0;
    int ai_prediction = 0;
    model::ConfidenceBin bin = model::ConfidenceBin::Low;
};

struct TrialBank {
    std::vector<BankTrial> training;
    std::vector<BankTrial> testing;
    sim::PlanFactory plans;  // (group, permutation seed) -> plan over testing ids
};

// Testing trials and plans from the experiment-2 design; training trials
// sampled from the training split and advised by the same model.
TrialBank make_trial_bank(const sim::World& world, const sim::Experiment2Design& design, int training_trials,
                          std::uint64_t seed);

enum class Phase { Training, Testing, Survey, Done };
const char* to_string(Phase p) noexcept;

using Clock = std::function<double()>;  // seconds, monotone
Clock steady_clock();

struct ServiceOptions {
    std::uint64_t seed = 0;
    double expiry_seconds = 7200.0;
    std::optional<std::filesystem::path> state_dir;  // log + snapshots; in-memory when unset
};

class SessionService {
public:
    SessionService(TrialBank bank, ServiceOptions options, Clock clock = steady_clock());

    // body may carry "group" (forced assignment) and "seed".
    Json create_session(const Json& body);
    Json next_trial(const std::string& id);
    Json submit_answer(const std::string& id, const Json& body);
    // {"advanced": false, "remaining_seconds": r} while time remains.
    Json advance(const std::string& id);
    Json summary(const std::string& id);

    // The session's testing records as logged.
    std::vector<sim::TrialRecord> records(const std::string& id);

    // Answer options for the closing time-usage question.
    static const std::vector<std::string>& survey_options();

    static constexpr std::array<PolicyKind, 5> kGroups = {PolicyKind::HumanOnly, PolicyKind::Constant,
                                                          PolicyKind::Random, PolicyKind::ConfidenceBased,
                                                          PolicyKind::ConfidenceBasedExplained};

private:
    struct Step {
        int trial = 0;
        double seconds = 0.0;
    };
    struct Answer {
        int decision = 0;
        sim::SelfConfidence confidence = sim::SelfConfidence::None;
        double elapsed = 0.0;
        std::optional<double> client_elapsed;
    };
    struct Session {
        std::string id;
        PolicyKind group = PolicyKind::Constant;
        std::uint64_t permutation_seed = 0;
        std::vector<Step> testing;
        Phase phase = Phase::Training;
        std::size_t cursor = 0;
        std::optional<double> dispatched_at;
        std::optional<Answer> answer;  // latest answer to the current trial
        double created = 0.0;
        double updated = 0.0;
        std::vector<sim::TrialRecord> records;
        std::optional<std::string> survey;
        std::mutex mutex;
    };

    std::shared_ptr<Session> find(const std::string& id);
    void touch_or_expire(Session& s, double now);
    const BankTrial& current(const Session& s) const;
    double allocated(const Session& s) const;
    Json trial_payload(const Session& s, double now) const;
    sim::TrialRecord make_record(const Session& s, double now) const;
    void log_event(const Session& s, const std::string& type, Json detail);
    void log_record(const sim::TrialRecord& r);
    void snapshot(const Session& s);
    std::string new_id();

    TrialBank bank_;
    ServiceOptions options_;
    Clock clock_;
    std::shared_mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::mutex create_mutex_;
    std::uint64_t created_count_ = 0;
    std::mutex log_mutex_;
    std::ofstream event_log_;
    std::ofstream trial_log_;
};

}  // namespace deanchor::service
