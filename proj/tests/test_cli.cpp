#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "deanchor/json_io.hpp"
#include "deanchor/manifest.hpp"
#include "support.hpp"

using namespace deanchor;
namespace fs = std::filesystem;
namespace ts = testing_support;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(DEANCHOR_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.out += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Writes a shipped config with data paths made absolute plus the given overrides.
fs::path config_from(const std::string& shipped, const fs::path& dir, const Json& patch) {
    Json doc = read_json_file(ts::source_dir() / "configs" / shipped);
    if (doc.contains("data")) doc["data"]["dir"] = (ts::source_dir() / "data" / "surrogate").string();
    doc.merge_patch(patch);
    const auto path = dir / "config.json";
    std::ofstream(path) << doc.dump(2);
    return path;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("help lists every subcommand and flag") {
    const auto top = run("--help");
    CHECK(top.code == 0);
    for (const char* sub : {"ingest", "train", "calibrate", "simulate", "compare-policies", "report"}) {
        CHECK_MESSAGE(top.out.find(sub) != std::string::npos, sub);
    }
    const auto sim = run("simulate --help");
    CHECK(sim.code == 0);
    for (const char* flag : {"--config", "--seed", "--out", "--format", "--replications", "--threads"}) {
        CHECK_MESSAGE(sim.out.find(flag) != std::string::npos, flag);
    }
    CHECK(run("report --help").out.find("--in") != std::string::npos);
    CHECK(run("--version").out.find(kToolVersion) != std::string::npos);
}

TEST_CASE("exit codes follow the error class") {
    const auto dir = ts::scratch("cli_codes");
    CHECK(run("frobnicate").code == 2);
    CHECK(run("train").code == 2);
    CHECK(run("train --config " + q(dir / "missing.json")).code == 2);

    {
        std::ofstream(dir / "bad.json") << R"({"schema_version": 1, "kind": "config", "seed": 1, "colour": 3})";
        CHECK(run("ingest --config " + q(dir / "bad.json")).code == 2);
    }
    {
        std::ofstream(dir / "nodata.json")
            << R"({"schema_version": 1, "kind": "config", "seed": 1, "data": {"dir": ")" + (dir / "nowhere").string() + R"("}})";
        CHECK(run("ingest --out " + q(dir / "o") + " --config " + q(dir / "nodata.json")).code == 3);
    }
    {
        const auto sub = dir / "cal";
        fs::create_directories(sub);
        const Json curve = {{"schema_version", 1}, {"kind", "agreement_curve"}, {"times", {10, 25}},
                            {"agree_right", {0.9, 0.9}}, {"agree_wrong", {0.0, 0.0}}};
        const auto cfg = config_from("experiment2.json", sub, {{"curves", {{"default", curve}}}});
        const auto r = run("calibrate --out " + q(sub / "o") + " --config " + q(cfg));
        CHECK_MESSAGE(r.code == 4, r.out);
    }
    {
        const auto sub = dir / "budget";
        fs::create_directories(sub);
        const auto cfg = config_from("assumption1_demo.json", sub, {{"policy", {{"budget", {{"t_min", 30}}}}}});
        const auto r = run("compare-policies --out " + q(sub / "o") + " --config " + q(cfg));
        CHECK_MESSAGE(r.code == 5, r.out);
    }
}

TEST_CASE("train writes a seven-weight model and a verifiable manifest") {
    const auto dir = ts::scratch("cli_train");
    const auto cfg = config_from("train_7feature.json", dir, Json::object());
    const auto r = run("train --out " + q(dir / "o") + " --config " + q(cfg));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const Json model = read_json_file(dir / "o" / "model.json");
    CHECK(model["weights"].size() == 7);
    const Json manifest = read_json_file(dir / "o" / "train.manifest.json");
    CHECK(verify_manifest(manifest).empty());
    std::ofstream(dir / "o" / "model.json", std::ios::app) << " ";
    CHECK(verify_manifest(manifest).size() == 1);
}

TEST_CASE("simulate is byte-identical across runs and thread counts") {
    const auto dir = ts::scratch("cli_sim");
    const auto cfg = config_from("experiment2.json", dir,
                                 {{"simulate", {{"calibration", "inline"}, {"replications", 30}, {"log_trials", true}}}});
    const auto a = run("simulate --threads 1 --out " + q(dir / "a") + " --config " + q(cfg));
    const auto b = run("simulate --threads 3 --out " + q(dir / "b") + " --config " + q(cfg));
    REQUIRE_MESSAGE(a.code == 0, a.out);
    REQUIRE_MESSAGE(b.code == 0, b.out);
    CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));
    CHECK(slurp(dir / "a" / "trials.jsonl") == slurp(dir / "b" / "trials.jsonl"));
    CHECK_FALSE(slurp(dir / "a" / "trials.jsonl").empty());

    const auto c = run("simulate --seed 99 --threads 1 --out " + q(dir / "c") + " --config " + q(cfg));
    REQUIRE(c.code == 0);
    CHECK(slurp(dir / "a" / "metrics.json") != slurp(dir / "c" / "metrics.json"));

    // report re-renders without loss
    REQUIRE(run("report --format csv --out " + q(dir / "r") + " --in " + q(dir / "a" / "metrics.json")).code == 0);
    REQUIRE(run("report --format json --out " + q(dir / "r2") + " --in " + q(dir / "r" / "report.csv")).code == 0);
    CHECK(slurp(dir / "r2" / "report.json") == slurp(dir / "a" / "metrics.json"));
}

TEST_CASE("compare-policies ranks confidence-based first on the demo curves") {
    const auto dir = ts::scratch("cli_policy");
    const auto r = run("compare-policies --out " + q(dir) + " --config " +
                       q(ts::source_dir() / "configs" / "assumption1_demo.json"));
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const Json doc = read_json_file(dir / "policy_comparison.json");
    CHECK(doc["ranked"][0]["policy"] == "confidence");
}
