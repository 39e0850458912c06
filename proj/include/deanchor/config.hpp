#pragma once

// The pipeline configuration shared by the CLI subcommands and the session
// service. Relative paths resolve against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deanchor/allocation.hpp"
#include "deanchor/classifier.hpp"
#include "deanchor/json_io.hpp"
#include "deanchor/response_model.hpp"
#include "deanchor/sim_harness.hpp"

namespace deanchor {

struct SimulateConfig {
    std::string experiment = "experiment2";
    std::uint64_t replications = 10000;
    unsigned threads = 0;  // 0: hardware concurrency
    std::optional<std::filesystem::path> calibration;  // output of `calibrate`
    bool calibrate_inline = false;
    std::vector<alloc::PolicyKind> groups;  // empty: all groups of the experiment
    bool log_trials = false;
    sim::Experiment2Design::Times times;
};

struct PolicyConfig {
    alloc::TimeBudget budget;
    double p_low = 0.5;
    alloc::RewardCurves curves;
};

struct ServiceConfig {
    std::filesystem::path static_dir;
    std::filesystem::path state_dir;
    int training_trials = 15;
    double expiry_seconds = 7200.0;
};

struct PipelineConfig {
    std::filesystem::path source;
    Json raw;
    std::uint64_t seed = 0;
    sim::DataConfig data;
    model::TrainingOptions training;
    std::optional<std::vector<std::string>> features;  // train: nullopt = the reference ten
    bool all_features = false;
    sim::AgentConfig agent;
    response::AgreementCurve curve = response::default_experiment1_curve();
    response::AgreementCurve explained_curve = response::explained_confidence_curve();
    SimulateConfig simulate;
    std::optional<PolicyConfig> policy;
    ServiceConfig service;

    // Sub-seeds derived from the root seed.
    std::uint64_t design_seed() const;
    std::uint64_t run_seed() const;
};

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const Json& doc, const std::filesystem::path& base_dir);

// "experiment1", "explained_confidence", or an inline agreement_curve document.
response::AgreementCurve curve_from_config(const Json& j);

}  // namespace deanchor
