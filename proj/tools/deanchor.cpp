// deanchor: ingest -> train -> calibrate -> simulate -> compare-policies -> report.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "deanchor/config.hpp"
#include "deanchor/error.hpp"
#include "deanchor/manifest.hpp"
#include "deanchor/sim_harness.hpp"
#include "deanchor/student_data.hpp"

namespace fs = std::filesystem;
using namespace deanchor;

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kCalibration = 4, kBudget = 5 };

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Parameter:
        case ErrorKind::Validation:
            return kConfig;
        case ErrorKind::Data:
        case ErrorKind::Sampling:
        case ErrorKind::Training:
        case ErrorKind::Evidence:
            return kData;
        case ErrorKind::Calibration:
            return kCalibration;
        case ErrorKind::Budget:
            return kBudget;
        default:
            return kOther;
    }
}

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "json";
    std::optional<std::uint64_t> replications;
    std::optional<unsigned> threads;
};

void add_common(CLI::App* cmd, Common& c, bool needs_config = true) {
    auto* opt = cmd->add_option("--config", c.config, "Pipeline config file (JSON)");
    if (needs_config) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Override the config's root seed");
    cmd->add_option("--out", c.out, "Output directory (default: $DEANCHOR_OUT_DIR or ./out)");
    cmd->add_option("--format", c.format, "Report format")
        ->check(CLI::IsMember({"json", "text", "csv"}))
        ->capture_default_str();
    cmd->add_option("--replications", c.replications, "Sessions per group (simulate)");
    cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
}

fs::path out_dir(const Common& c) {
    if (!c.out.empty()) return c.out;
    if (const char* env = std::getenv("DEANCHOR_OUT_DIR"); env && *env) return env;
    return "out";
}

PipelineConfig load(const Common& c) {
    PipelineConfig cfg = load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.replications) cfg.simulate.replications = *c.replications;
    if (c.threads) cfg.simulate.threads = *c.threads;
    return cfg;
}

const char* extension(sim::Format f) {
    switch (f) {
        case sim::Format::Json: return ".json";
        case sim::Format::Text: return ".txt";
        case sim::Format::Csv: return ".csv";
    }
    return ".json";
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Config, "cannot write " + path.string());
    out << text;
}

class Run {
public:
    Run(std::string subcommand, const Common& common) : common_(common), start_(std::chrono::steady_clock::now()) {
        manifest_.subcommand = std::move(subcommand);
        dir_ = out_dir(common);
        fs::create_directories(dir_);
    }

    const fs::path& dir() const { return dir_; }
    RunManifest& manifest() { return manifest_; }

    void bind(const PipelineConfig& cfg) {
        manifest_.config = cfg.raw;
        manifest_.config["seed"] = cfg.seed;
        manifest_.seed = cfg.seed;
        manifest_.add_input(cfg.source);
    }

    void data_inputs(const PipelineConfig& cfg) {
        for (const char* f : {"student-mat.csv", "student-por.csv"}) {
            if (fs::exists(cfg.data.dir / f)) manifest_.add_input(cfg.data.dir / f);
        }
    }

    fs::path output(const std::string& name, const std::string& content) {
        const fs::path p = dir_ / name;
        write_text(p, content);
        manifest_.add_output(p);
        return p;
    }

    void finish() {
        manifest_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_json_file(dir_ / (manifest_.subcommand + ".manifest.json"), manifest_.to_json());
    }

private:
    Common common_;
    std::chrono::steady_clock::time_point start_;
    RunManifest manifest_;
    fs::path dir_;
};

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

int cmd_ingest(const Common& c) {
    auto cfg = load(c);
    Run run("ingest", c);
    run.bind(cfg);
    run.data_inputs(cfg);
    const auto records = data::ingest_pooled(cfg.data.dir);
    std::size_t math = 0, pass = 0;
    for (const auto& r : records) {
        math += r.subject == data::Subject::Math ? 1 : 0;
        pass += data::pass_label(r.final_grade(), cfg.data.pass_threshold);
    }
    Json doc = make_document("ingest_summary");
    doc["data_dir"] = cfg.data.dir.string();
    doc["records"] = records.size();
    doc["math"] = math;
    doc["portuguese"] = records.size() - math;
    doc["pass_threshold"] = cfg.data.pass_threshold;
    doc["pass"] = pass;
    doc["pass_rate"] = static_cast<double>(pass) / static_cast<double>(records.size());
    run.output("ingest.json", dump(doc));
    run.finish();
    std::cout << "records " << records.size() << " (math " << math << ", portuguese " << records.size() - math
              << "), pass rate " << doc["pass_rate"].get<double>() << "\n";
    return kOk;
}

int cmd_train(const Common& c) {
    auto cfg = load(c);
    Run run("train", c);
    run.bind(cfg);
    run.data_inputs(cfg);
    const auto records = data::ingest_pooled(cfg.data.dir);
    data::PrepareOptions prep;
    prep.pass_threshold = cfg.data.pass_threshold;
    prep.split_seed = cfg.data.split_seed;
    prep.train_fraction = cfg.data.train_fraction;
    const auto full = data::prepare(records, prep);
    const auto full_model = model::train(full, cfg.training);

    const std::vector<std::string> features =
        cfg.all_features ? full.attributes() : cfg.features.value_or(model::reference_top10());
    const auto ds = full.select(features);
    const auto m = model::train(ds, cfg.training);

    Json report = make_document("train_report");
    report["features"] = m.attributes();
    report["train_accuracy"] = model::accuracy(m, ds, data::Split::Train);
    report["test_accuracy"] = model::accuracy(m, ds, data::Split::Test);
    report["train_rows"] = ds.count(data::Split::Train);
    report["test_rows"] = ds.count(data::Split::Test);
    Json ranking = Json::array();
    for (const auto& r : model::rank_attributes(full_model)) {
        ranking.push_back({{"attribute", r.attribute}, {"importance", r.importance}});
    }
    report["full_model_ranking"] = ranking;
    const auto top10 = model::rank_and_select_features(full_model, std::min<std::size_t>(10, full.attributes().size()));
    report["top10"] = top10;
    report["reference_missing_from_top10"] = model::missing_attributes(top10, model::reference_top10());
    report["warnings"] = ds.warnings;
    report["converged"] = m.trace().converged;

    run.output("model.json", dump(model::to_json(m)));
    run.output("train_report.json", dump(report));
    run.finish();
    std::cout << features.size() << "-feature model: train accuracy " << report["train_accuracy"].get<double>()
              << ", test accuracy " << report["test_accuracy"].get<double>() << "\n";
    const auto missing = report["reference_missing_from_top10"].get<std::vector<std::string>>();
    if (!missing.empty()) {
        std::cout << "note: reference features outside this top-10:";
        for (const auto& f : missing) std::cout << " " << f;
        std::cout << "\n";
    }
    return kOk;
}

struct Calibration {
    response::BetaSchedule experiment1;
    response::BetaSchedule explained;
};

Json calibration_json(const PipelineConfig& cfg, const Calibration& cal) {
    Json doc = make_document("calibration");
    doc["design_seed"] = cfg.design_seed();
    doc["temperature"] = cfg.agent.temperature;
    doc["curves"] = {{"experiment1", response::to_json(cfg.curve)},
                     {"explained_confidence", response::to_json(cfg.explained_curve)}};
    doc["fitted_slope"] = response::fitted_slope(cfg.curve);
    doc["schedules"] = {{"experiment1", response::to_json(cal.experiment1)},
                        {"explained_confidence", response::to_json(cal.explained)}};
    return doc;
}

Calibration calibrate(const PipelineConfig& cfg, const sim::World& world, const sim::Experiment1Design& d1) {
    return {sim::calibrate_on_probes(world, d1, cfg.agent, cfg.curve),
            sim::calibrate_on_probes(world, d1, cfg.agent, cfg.explained_curve)};
}

Calibration read_calibration(const PipelineConfig& cfg, const fs::path& path) {
    if (!fs::exists(path)) {
        fail(ErrorKind::Config, "calibration file not found: " + path.string() + " (run `deanchor calibrate` first)");
    }
    const Json doc = read_json_file(path);
    check_document(doc, "calibration");
    if (require_as<std::uint64_t>(doc, "design_seed") != cfg.design_seed() ||
        require_as<double>(doc, "temperature") != cfg.agent.temperature) {
        fail(ErrorKind::Config, "calibration " + path.string() + " was fitted for a different seed or temperature");
    }
    const Json& s = require(doc, "schedules");
    return {response::beta_schedule_from_json(require(s, "experiment1")),
            response::beta_schedule_from_json(require(s, "explained_confidence"))};
}

int cmd_calibrate(const Common& c) {
    auto cfg = load(c);
    Run run("calibrate", c);
    run.bind(cfg);
    run.data_inputs(cfg);
    const auto world = sim::build_world(cfg.data, cfg.agent, cfg.training);
    const sim::Experiment1Design d1(world, cfg.design_seed());
    const auto cal = calibrate(cfg, world, d1);
    run.output("calibration.json", dump(calibration_json(cfg, cal)));
    run.finish();
    auto show = [](const char* name, const response::BetaSchedule& s) {
        std::cout << name << ":";
        for (std::size_t i = 0; i < s.times().size(); ++i) std::cout << " beta(" << s.times()[i] << ")=" << s.betas()[i];
        std::cout << "  residual " << s.residual() << "\n";
    };
    show("experiment1", cal.experiment1);
    show("explained_confidence", cal.explained);
    return kOk;
}

int cmd_simulate(const Common& c) {
    auto cfg = load(c);
    const auto format = sim::format_from_string(c.format);
    Run run("simulate", c);
    run.bind(cfg);
    run.data_inputs(cfg);
    if (!cfg.simulate.calibration && !cfg.simulate.calibrate_inline) {
        fail(ErrorKind::Config, "simulate.calibration is not set: point it at a calibration.json or use \"inline\"");
    }
    const auto world = sim::build_world(cfg.data, cfg.agent, cfg.training);
    const sim::Experiment1Design d1(world, cfg.design_seed());
    Calibration cal;
    if (cfg.simulate.calibrate_inline) {
        cal = calibrate(cfg, world, d1);
    } else {
        run.manifest().add_input(*cfg.simulate.calibration);
        cal = read_calibration(cfg, *cfg.simulate.calibration);
    }

    sim::RunOptions opts;
    opts.seed = cfg.run_seed();
    opts.replications = cfg.simulate.replications;
    opts.threads = cfg.simulate.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : cfg.simulate.threads;
    opts.agent = cfg.agent;
    opts.groups = cfg.simulate.groups;
    using alloc::PolicyKind;
    for (auto g : {PolicyKind::Constant, PolicyKind::Random, PolicyKind::ConfidenceBased}) opts.schedules[g] = cal.experiment1;
    opts.schedules[PolicyKind::ConfidenceBasedExplained] = cal.explained;

    std::ostringstream log;
    if (cfg.simulate.log_trials) opts.log = &log;
    sim::StratifiedMetrics metrics;
    if (cfg.simulate.experiment == "experiment1") {
        metrics = sim::run_experiment1(world, d1, opts);
    } else {
        const sim::Experiment2Design d2(world, cfg.design_seed(), cfg.simulate.times);
        metrics = sim::run_experiment2(world, d2, opts);
    }
    run.output(std::string("metrics") + extension(format), sim::render(metrics, format));
    if (cfg.simulate.log_trials) run.output("trials.jsonl", log.str());
    run.finish();
    std::cout << cfg.simulate.experiment << ": " << metrics.groups.size() << " group(s) x " << metrics.replications
              << " sessions -> " << (run.dir() / (std::string("metrics") + extension(format))).string() << "\n";
    return kOk;
}

int cmd_compare(const Common& c) {
    auto cfg = load(c);
    if (!cfg.policy) fail(ErrorKind::Config, "config has no 'policy' section");
    Run run("compare-policies", c);
    run.bind(cfg);
    const auto& p = *cfg.policy;
    const auto cmp = alloc::compare_policies(alloc::ConfidenceSplit(p.p_low), p.curves, p.budget);
    const auto format = sim::format_from_string(c.format);
    if (format == sim::Format::Json) {
        run.output("policy_comparison.json", dump(alloc::to_json(cmp)));
    } else if (format == sim::Format::Text) {
        run.output("policy_comparison.txt", alloc::to_text(cmp));
    } else {
        std::ostringstream csv;
        csv << "policy,t_low,t_high,reward\n" << std::setprecision(17);
        for (const auto& r : cmp.ranked) csv << alloc::to_string(r.kind) << "," << r.t_low << "," << r.t_high << "," << r.reward << "\n";
        run.output("policy_comparison.csv", csv.str());
    }
    run.finish();
    std::cout << alloc::to_text(cmp);
    return kOk;
}

int cmd_report(const Common& c, const std::string& input) {
    if (!fs::exists(input)) fail(ErrorKind::Config, "report input not found: " + input);
    std::ifstream in(input, std::ios::binary);
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    const std::string ext = fs::path(input).extension().string();
    const auto in_format = ext == ".csv" ? sim::Format::Csv : ext == ".txt" ? sim::Format::Text : sim::Format::Json;
    const auto metrics = sim::parse(text, in_format);
    const auto format = sim::format_from_string(c.format);
    const std::string rendered = sim::render(metrics, format);
    if (c.out.empty()) {
        std::cout << rendered;
        return kOk;
    }
    Run run("report", c);
    run.manifest().add_input(input);
    run.manifest().seed = metrics.seed;
    run.output(std::string("report") + extension(format), rendered);
    run.finish();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deanchor: anchoring-aware time allocation for human-AI decisions"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    Common common;
    std::string report_input;
    auto* ingest = app.add_subcommand("ingest", "Read the student-performance files and summarize them");
    auto* train = app.add_subcommand("train", "Train the assisting logistic-regression model");
    auto* calibrate = app.add_subcommand("calibrate", "Fit beta(t) schedules to the agreement curves");
    auto* simulate = app.add_subcommand("simulate", "Run seeded replications of an experiment");
    auto* compare = app.add_subcommand("compare-policies", "Rank time-allocation policies analytically");
    auto* report = app.add_subcommand("report", "Re-render a metrics file in another format");
    for (auto* cmd : {ingest, train, calibrate, simulate, compare}) add_common(cmd, common);
    add_common(report, common, false);
    report->add_option("--in", report_input, "Metrics file (json, txt or csv)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (*ingest) return cmd_ingest(common);
        if (*train) return cmd_train(common);
        if (*calibrate) return cmd_calibrate(common);
        if (*simulate) return cmd_simulate(common);
        if (*compare) return cmd_compare(common);
        if (*report) return cmd_report(common, report_input);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
    return kOther;
}
