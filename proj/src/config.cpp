#include "deanchor/config.hpp"

#include <algorithm>
#include <initializer_list>

#include "deanchor/error.hpp"
#include "deanchor/rng.hpp"

namespace deanchor {

namespace {

void check_keys(const Json& obj, const char* where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(ErrorKind::Config, std::string("'") + where + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; })) {
            fail(ErrorKind::Config, "unknown field '" + it.key() + "' in " + where);
        }
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

template <typename T>
T get(const Json& obj, const char* key, T fallback) {
    try {
        return value_or<T>(obj, key, fallback);
    } catch (const Json::exception& e) {
        fail(ErrorKind::Config, std::string("field '") + key + "' has the wrong type: " + e.what());
    }
}

}  // namespace

std::uint64_t PipelineConfig::design_seed() const { return derive_seed(seed, 1); }

std::uint64_t PipelineConfig::run_seed() const { return derive_seed(seed, 2); }

response::AgreementCurve curve_from_config(const Json& j) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "experiment1") return response::default_experiment1_curve();
        if (name == "explained_confidence") return response::explained_confidence_curve();
        fail(ErrorKind::Config, "unknown curve '" + name + "' (expected experiment1 or explained_confidence)");
    }
    return response::agreement_curve_from_json(j);
}

PipelineConfig parse_config(const Json& doc, const std::filesystem::path& base) {
    check_document(doc, "config");
    check_keys(doc, "config",
               {"schema_version", "kind", "description", "seed", "data", "training", "agent", "curves", "simulate",
                "policy", "service"});
    PipelineConfig c;
    c.raw = doc;
    if (!doc.contains("seed") || !doc["seed"].is_number_unsigned()) {
        fail(ErrorKind::Config, "config requires an explicit unsigned 'seed' (no implicit entropy)");
    }
    c.seed = doc["seed"].get<std::uint64_t>();

    if (doc.contains("data")) {
        const Json& d = doc["data"];
        check_keys(d, "data", {"dir", "split_seed", "pass_threshold", "train_fraction"});
        if (d.contains("dir")) c.data.dir = resolve(base, d["dir"].get<std::string>());
        c.data.split_seed = get<std::uint64_t>(d, "split_seed", c.data.split_seed);
        c.data.pass_threshold = get<int>(d, "pass_threshold", c.data.pass_threshold);
        c.data.train_fraction = get<double>(d, "train_fraction", c.data.train_fraction);
    } else {
        c.data.dir = resolve(base, c.data.dir.string());
    }

    if (doc.contains("training")) {
        const Json& t = doc["training"];
        check_keys(t, "training",
                   {"learning_rate", "l2", "max_epochs", "gradient_tolerance", "init_scale", "seed", "features"});
        c.training.learning_rate = get<double>(t, "learning_rate", c.training.learning_rate);
        c.training.l2 = get<double>(t, "l2", c.training.l2);
        c.training.max_epochs = get<int>(t, "max_epochs", c.training.max_epochs);
        c.training.gradient_tolerance = get<double>(t, "gradient_tolerance", c.training.gradient_tolerance);
        c.training.init_scale = get<double>(t, "init_scale", c.training.init_scale);
        c.training.seed = get<std::uint64_t>(t, "seed", c.training.seed);
        if (t.contains("features") && !t["features"].is_null()) {
            if (t["features"].is_string()) {
                const auto f = t["features"].get<std::string>();
                if (f == "all") {
                    c.all_features = true;
                } else if (f == "reduced") {
                    c.features = model::without(model::reference_top10(), model::complementary_attributes());
                } else if (f != "reference") {
                    fail(ErrorKind::Config, "training.features must be a list, 'all', 'reference' or 'reduced'");
                }
            } else {
                c.features = t["features"].get<std::vector<std::string>>();
            }
        }
    }

    if (doc.contains("agent")) {
        const Json& a = doc["agent"];
        check_keys(a, "agent", {"alpha", "gamma", "temperature", "ai_accuracy", "pseudocount", "beta_range", "tie_rule"});
        c.agent.alpha = get<double>(a, "alpha", c.agent.alpha);
        c.agent.gamma = get<double>(a, "gamma", c.agent.gamma);
        c.agent.temperature = get<double>(a, "temperature", c.agent.temperature);
        c.agent.ai_accuracy = get<double>(a, "ai_accuracy", c.agent.ai_accuracy);
        c.agent.pseudocount = get<double>(a, "pseudocount", c.agent.pseudocount);
        if (a.contains("beta_range")) {
            const auto r = a["beta_range"].get<std::vector<double>>();
            if (r.size() != 2) fail(ErrorKind::Config, "agent.beta_range must be [min, max]");
            c.agent.beta_min = r[0];
            c.agent.beta_max = r[1];
        }
        if (a.contains("tie_rule")) {
            const auto rule = a["tie_rule"].get<std::string>();
            if (rule == "favor_ai") {
                c.agent.tie_rule.kind = bias::TieKind::FavorAi;
            } else if (rule == "favor_class0") {
                c.agent.tie_rule.kind = bias::TieKind::FavorClass0;
            } else if (rule == "coin_flip") {
                c.agent.tie_rule.kind = bias::TieKind::CoinFlip;
                c.agent.tie_rule.seed = derive_seed(c.seed, 3);
            } else {
                fail(ErrorKind::Config, "agent.tie_rule must be favor_ai, favor_class0 or coin_flip");
            }
        }
    }

    if (doc.contains("curves")) {
        const Json& cv = doc["curves"];
        check_keys(cv, "curves", {"default", "explained"});
        if (cv.contains("default")) c.curve = curve_from_config(cv["default"]);
        if (cv.contains("explained")) c.explained_curve = curve_from_config(cv["explained"]);
    }

    if (doc.contains("simulate")) {
        const Json& s = doc["simulate"];
        check_keys(s, "simulate", {"experiment", "replications", "threads", "calibration", "groups", "log_trials", "times"});
        c.simulate.experiment = get<std::string>(s, "experiment", c.simulate.experiment);
        if (c.simulate.experiment != "experiment1" && c.simulate.experiment != "experiment2") {
            fail(ErrorKind::Config, "simulate.experiment must be experiment1 or experiment2");
        }
        c.simulate.replications = get<std::uint64_t>(s, "replications", c.simulate.replications);
        c.simulate.threads = get<unsigned>(s, "threads", c.simulate.threads);
        if (s.contains("calibration") && !s["calibration"].is_null()) {
            const auto cal = s["calibration"].get<std::string>();
            if (cal == "inline") {
                c.simulate.calibrate_inline = true;
            } else {
                c.simulate.calibration = resolve(base, cal);
            }
        }
        if (s.contains("groups")) {
            for (const auto& g : s["groups"]) c.simulate.groups.push_back(alloc::policy_kind_from_string(g.get<std::string>()));
        }
        c.simulate.log_trials = get<bool>(s, "log_trials", false);
        if (s.contains("times")) {
            const Json& t = s["times"];
            check_keys(t, "simulate.times", {"human_only", "constant", "t_low", "t_high"});
            auto& tm = c.simulate.times;
            tm.human_only = get<double>(t, "human_only", tm.human_only);
            tm.constant = get<double>(t, "constant", tm.constant);
            tm.t_low = get<double>(t, "t_low", tm.t_low);
            tm.t_high = get<double>(t, "t_high", tm.t_high);
        }
    }

    if (doc.contains("policy")) {
        const Json& p = doc["policy"];
        check_keys(p, "policy", {"budget", "p_low", "curves"});
        PolicyConfig pc;
        pc.budget = alloc::time_budget_from_json(require(p, "budget"));
        pc.p_low = get<double>(p, "p_low", 0.5);
        const Json& curves = require(p, "curves");
        if (curves.contains("from_agreement")) {
            const Json& fa = curves["from_agreement"];
            check_keys(fa, "policy.curves.from_agreement", {"curve", "p_ai_low", "p_ai_high", "grid"});
            pc.curves = alloc::reward_curves_from_agreement(
                curve_from_config(fa.contains("curve") ? fa["curve"] : Json("experiment1")),
                require_as<double>(fa, "p_ai_low"), require_as<double>(fa, "p_ai_high"),
                require_as<std::vector<double>>(fa, "grid"));
        } else {
            pc.curves = alloc::reward_curves_from_json(curves);
        }
        c.policy = pc;
    }

    if (doc.contains("service")) {
        const Json& s = doc["service"];
        check_keys(s, "service", {"static_dir", "state_dir", "training_trials", "expiry_seconds"});
        if (s.contains("static_dir")) c.service.static_dir = resolve(base, s["static_dir"].get<std::string>());
        if (s.contains("state_dir")) c.service.state_dir = resolve(base, s["state_dir"].get<std::string>());
        c.service.training_trials = get<int>(s, "training_trials", c.service.training_trials);
        c.service.expiry_seconds = get<double>(s, "expiry_seconds", c.service.expiry_seconds);
    }
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) fail(ErrorKind::Config, "config file not found: " + path.string());
    auto c = parse_config(read_json_file(path), path.parent_path().empty() ? "." : path.parent_path());
    c.source = path;
    return c;
}

}  // namespace deanchor
