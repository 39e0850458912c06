#include "deanchor/session_service.hpp"

#include <openssl/rand.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "deanchor/error.hpp"
#include "deanchor/rng.hpp"

namespace deanchor::service {

namespace {

std::vector<DisplayFeature> display_features(const sim::World& world, const data::RawStudentRecord& record) {
    std::vector<DisplayFeature> out;
    for (const auto& attr : world.human_features) {
        const auto idx = data::attribute_index(attr);
        DisplayFeature f;
        f.attribute = attr;
        f.label = idx ? std::string(data::schema()[*idx].label) : attr;
        f.value = data::display_value(record, attr);
        out.push_back(std::move(f));
    }
    return out;
}

const char* label_name(int label) { return label == 1 ? "pass" : "fail"; }

int decision_from(const Json& body) {
    auto it = body.find("decision");
    if (it == body.end() || !it->is_string()) fail(ErrorKind::Validation, "'decision' must be \"pass\" or \"fail\"");
    const auto d = it->get<std::string>();
    if (d == "pass") return 1;
    if (d == "fail") return 0;
    fail(ErrorKind::Validation, "'decision' must be \"pass\" or \"fail\", got \"" + d + "\"");
}

void check_body(const Json& body) {
    if (body.is_null()) return;
    if (!body.is_object()) fail(ErrorKind::Validation, "request body must be a JSON object");
    auto v = body.find("schema_version");
    if (v == body.end() || !v->is_number_integer() || v->get<int>() != kSchemaVersion) {
        fail(ErrorKind::Validation, "request body must carry schema_version " + std::to_string(kSchemaVersion));
    }
}

double round_ms(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

}  // namespace

TrialBank make_trial_bank(const sim::World& world, const sim::Experiment2Design& design, int training_trials,
                          std::uint64_t seed) {
    if (training_trials < 0) fail(ErrorKind::Config, "training_trials must be non-negative");
    TrialBank bank;
    for (const auto& t : design.trials()) {
        BankTrial b;
        b.id = t.id;
        b.features = display_features(world, world.records[t.record]);
        b.true_label = t.true_label;
        b.ai_prediction = t.shown_prediction;
        b.bin = t.bin;
        bank.testing.push_back(std::move(b));
    }

    // Training trials come from the training split so they never overlap
    // the testing trials; advice comes from the same model.
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < world.dataset.y.size(); ++i) {
        if (world.dataset.split[i] == data::Split::Train) pool.push_back(i);
    }
    if (pool.size() < static_cast<std::size_t>(training_trials)) {
        fail(ErrorKind::Sampling, "training split too small for " + std::to_string(training_trials) + " training trials");
    }
    Rng rng(derive_seed(seed, 7));
    rng.shuffle(std::span<std::size_t>(pool));
    for (int k = 0; k < training_trials; ++k) {
        const std::size_t i = pool[static_cast<std::size_t>(k)];
        const auto& record = world.records[world.dataset.source_row[i]];
        const auto advice = model::advise(world.model7.probability(record), world.confidence_threshold);
        BankTrial b;
        b.id = k;
        b.features = display_features(world, record);
        b.true_label = world.dataset.y[i];
        b.ai_prediction = advice.predicted_label;
        b.bin = advice.bin;
        bank.training.push_back(std::move(b));
    }

    bank.plans = [design](PolicyKind group, std::uint64_t s) { return design.plan(group, s); };
    return bank;
}

const char* to_string(Phase p) noexcept {
    switch (p) {
        case Phase::Training: return "training";
        case Phase::Testing: return "testing";
        case Phase::Survey: return "survey";
        case Phase::Done: return "done";
    }
    return "unknown";
}

Clock steady_clock() {
    return [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
}

const std::vector<std::string>& SessionService::survey_options() {
    static const std::vector<std::string> kOptions = {"never", "rarely", "sometimes", "often", "always"};
    return kOptions;
}

SessionService::SessionService(TrialBank bank, ServiceOptions options, Clock clock)
    : bank_(std::move(bank)), options_(std::move(options)), clock_(std::move(clock)) {
    if (!bank_.plans) fail(ErrorKind::Config, "session service requires a plan source");
    if (bank_.testing.empty()) fail(ErrorKind::Config, "session service requires testing trials");
    if (options_.state_dir) {
        std::filesystem::create_directories(*options_.state_dir / "sessions");
        event_log_.open(*options_.state_dir / "events.jsonl", std::ios::app);
        trial_log_.open(*options_.state_dir / "trials.jsonl", std::ios::app);
        if (!event_log_ || !trial_log_) fail(ErrorKind::Config, "cannot open logs in " + options_.state_dir->string());
    }
}

std::string SessionService::new_id() {
    unsigned char bytes[16];
    if (RAND_bytes(bytes, sizeof bytes) != 1) fail(ErrorKind::State, "entropy source unavailable");
    std::ostringstream out;
    out << std::hex << std::setfill('0');
    for (unsigned char b : bytes) out << std::setw(2) << static_cast<int>(b);
    return out.str();
}

Json SessionService::create_session(const Json& body) {
    check_body(body);
    std::uint64_t seed = 0;
    {
        std::lock_guard lock(create_mutex_);
        seed = derive_seed(options_.seed, created_count_++);
    }
    if (body.is_object() && body.contains("seed")) {
        const Json& v = body["seed"];
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            fail(ErrorKind::Validation, "'seed' must be a non-negative integer");
        }
        seed = v.get<std::uint64_t>();
    }

    auto s = std::make_shared<Session>();
    Rng draw(derive_seed(seed, 0));
    s->group = kGroups[draw.below(kGroups.size())];
    if (body.is_object() && body.contains("group")) {
        if (!body["group"].is_string()) fail(ErrorKind::Validation, "'group' must be a string");
        try {
            s->group = alloc::policy_kind_from_string(body["group"].get<std::string>());
        } catch (const Error& e) {
            fail(ErrorKind::Validation, e.what());
        }
    }
    s->permutation_seed = derive_seed(seed, 1);
    const auto plan = bank_.plans(s->group, s->permutation_seed);
    for (const auto& block : plan.blocks) {
        for (int t : block.trials) s->testing.push_back({t, block.seconds});
    }
    s->phase = bank_.training.empty() ? Phase::Testing : Phase::Training;
    s->created = s->updated = clock_();
    s->id = new_id();
    {
        std::unique_lock lock(map_mutex_);
        sessions_[s->id] = s;
    }

    log_event(*s, "created", {{"group", alloc::to_string(s->group)}, {"permutation_seed", s->permutation_seed}});
    snapshot(*s);

    Json out = make_document("session");
    out["session"] = s->id;
    out["group"] = alloc::to_string(s->group);
    out["phase"] = to_string(s->phase);
    out["training_trials"] = bank_.training.size();
    out["testing_trials"] = s->testing.size();
    return out;
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) {
    std::shared_lock lock(map_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorKind::NotFound, "unknown session '" + id + "'");
    return it->second;
}

void SessionService::touch_or_expire(Session& s, double now) {
    if (now - s.updated > options_.expiry_seconds) fail(ErrorKind::Gone, "session '" + s.id + "' expired");
    s.updated = now;
}

const BankTrial& SessionService::current(const Session& s) const {
    if (s.phase == Phase::Training) return bank_.training.at(s.cursor);
    return bank_.testing.at(static_cast<std::size_t>(s.testing.at(s.cursor).trial));
}

double SessionService::allocated(const Session& s) const {
    return s.phase == Phase::Testing ? s.testing.at(s.cursor).seconds : 0.0;
}

Json SessionService::trial_payload(const Session& s, double now) const {
    Json out = make_document("trial");
    out["session"] = s.id;
    out["phase"] = to_string(s.phase);
    if (s.phase == Phase::Survey) {
        out["question"] = "How often did you use the entire time available for a trial?";
        out["options"] = survey_options();
        return out;
    }
    if (s.phase == Phase::Done) return out;

    const auto& t = current(s);
    const double alloc = allocated(s);
    const double elapsed = s.dispatched_at ? now - *s.dispatched_at : 0.0;
    out["index"] = s.cursor;
    out["total"] = s.phase == Phase::Training ? bank_.training.size() : s.testing.size();
    out["trial"] = t.id;
    out["allocated_seconds"] = alloc;
    out["remaining_seconds"] = round_ms(std::max(0.0, alloc - elapsed));
    Json features = Json::array();
    for (const auto& f : t.features) features.push_back({{"attribute", f.attribute}, {"label", f.label}, {"value", f.value}});
    out["features"] = std::move(features);

    if (s.group != PolicyKind::HumanOnly) {
        Json ai;
        ai["prediction"] = label_name(t.ai_prediction);
        if (s.group == PolicyKind::ConfidenceBasedExplained) ai["confidence"] = model::to_string(t.bin);
        out["ai"] = std::move(ai);
    }
    out["answered"] = s.answer.has_value();
    if (s.phase == Phase::Training && s.answer) {
        Json fb;
        fb["correct_answer"] = label_name(t.true_label);
        fb["your_answer"] = label_name(s.answer->decision);
        if (s.group != PolicyKind::HumanOnly) fb["ai_prediction"] = label_name(t.ai_prediction);
        out["feedback"] = std::move(fb);
    }
    return out;
}

Json SessionService::next_trial(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const double now = clock_();
    touch_or_expire(*s, now);
    if ((s->phase == Phase::Training || s->phase == Phase::Testing) && !s->dispatched_at) {
        s->dispatched_at = now;
        log_event(*s, "dispatched", {{"phase", to_string(s->phase)}, {"index", s->cursor}, {"trial", current(*s).id}});
    }
    return trial_payload(*s, now);
}

Json SessionService::submit_answer(const std::string& id, const Json& body) {
    check_body(body);
    if (!body.is_object()) fail(ErrorKind::Validation, "answer body required");
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const double now = clock_();
    touch_or_expire(*s, now);

    Json ack = make_document("answer_ack");
    ack["session"] = s->id;

    if (s->phase == Phase::Done) fail(ErrorKind::Conflict, "session already complete");
    if (s->phase == Phase::Survey) {
        auto it = body.find("time_usage");
        if (it == body.end() || !it->is_string()) fail(ErrorKind::Validation, "'time_usage' is required");
        const auto v = it->get<std::string>();
        const auto& opts = survey_options();
        if (std::find(opts.begin(), opts.end(), v) == opts.end()) {
            fail(ErrorKind::Validation, "'time_usage' must be one of never, rarely, sometimes, often, always");
        }
        s->survey = v;
        s->phase = Phase::Done;
        log_event(*s, "survey", {{"time_usage", v}});
        snapshot(*s);
        ack["phase"] = to_string(s->phase);
        return ack;
    }

    if (!s->dispatched_at) fail(ErrorKind::State, "no trial dispatched; request the trial first");
    const auto& t = current(*s);
    auto trial = body.find("trial");
    if (trial == body.end() || !trial->is_number_integer()) fail(ErrorKind::Validation, "'trial' must be an integer");
    auto phase = body.find("phase");
    if (phase != body.end() && (!phase->is_string() || phase->get<std::string>() != to_string(s->phase))) {
        fail(ErrorKind::State, std::string("answer is for another phase; current phase is ") + to_string(s->phase));
    }
    if (trial->get<int>() != t.id) {
        fail(ErrorKind::State, "answer for trial " + std::to_string(trial->get<int>()) + " but trial " +
                                   std::to_string(t.id) + " is current");
    }

    Answer a;
    a.decision = decision_from(body);
    auto conf = body.find("confidence");
    if (conf != body.end() && !conf->is_null()) {
        if (!conf->is_string()) fail(ErrorKind::Validation, "'confidence' must be low, medium or high");
        const auto c = conf->get<std::string>();
        if (c != "low" && c != "medium" && c != "high") fail(ErrorKind::Validation, "'confidence' must be low, medium or high");
        a.confidence = sim::self_confidence_from_string(c);
    } else if (s->phase == Phase::Testing) {
        fail(ErrorKind::Validation, "'confidence' is required in the testing phase");
    }
    auto client = body.find("client_elapsed_ms");
    if (client != body.end() && !client->is_null()) {
        if (!client->is_number() || client->get<double>() < 0) {
            fail(ErrorKind::Validation, "'client_elapsed_ms' must be a non-negative number");
        }
        a.client_elapsed = client->get<double>() / 1000.0;
    }

    const double elapsed = now - *s->dispatched_at;
    const double alloc = allocated(*s);
    // An answer may be revised while the allocation runs; once the time is
    // up the standing answer is final.
    if (s->answer && elapsed >= alloc) {
        fail(ErrorKind::Conflict, "trial " + std::to_string(t.id) + " already answered");
    }
    a.elapsed = elapsed;
    const bool revised = s->answer.has_value();
    s->answer = a;

    Json detail = {{"phase", to_string(s->phase)}, {"trial", t.id}, {"decision", label_name(a.decision)},
                   {"confidence", sim::to_string(a.confidence)}, {"elapsed", elapsed}, {"revised", revised}};
    if (a.client_elapsed) detail["client_elapsed"] = *a.client_elapsed;
    log_event(*s, "answer", std::move(detail));

    ack["phase"] = to_string(s->phase);
    ack["trial"] = t.id;
    ack["elapsed"] = round_ms(elapsed);
    ack["revised"] = revised;
    ack["remaining_seconds"] = round_ms(std::max(0.0, alloc - elapsed));
    if (s->phase == Phase::Training) {
        ack["feedback"] = trial_payload(*s, now)["feedback"];
    }
    return ack;
}

sim::TrialRecord SessionService::make_record(const Session& s, double now) const {
    const auto& t = current(s);
    const auto& a = *s.answer;
    sim::TrialRecord r;
    r.session = s.id;
    r.group = alloc::to_string(s.group);
    r.trial = t.id;
    r.allocated = allocated(s);
    r.decision = a.decision;
    r.correct = a.decision == t.true_label;
    if (s.group != PolicyKind::HumanOnly) r.agree = a.decision == t.ai_prediction;
    r.elapsed = now - *s.dispatched_at;
    r.answer_latency = a.elapsed;
    r.self_confidence = a.confidence;
    r.bin = t.bin;
    r.ai_correct = t.ai_prediction == t.true_label;
    r.probe = false;
    r.client_elapsed = a.client_elapsed;
    return r;
}

Json SessionService::advance(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    const double now = clock_();
    touch_or_expire(*s, now);
    if (s->phase != Phase::Training && s->phase != Phase::Testing) {
        fail(ErrorKind::State, std::string("nothing to advance in phase ") + to_string(s->phase));
    }
    if (!s->dispatched_at) fail(ErrorKind::State, "no trial dispatched");
    if (!s->answer) fail(ErrorKind::State, "trial " + std::to_string(current(*s).id) + " has no answer yet");

    Json out = make_document("advance");
    out["session"] = s->id;
    const double remaining = allocated(*s) - (now - *s->dispatched_at);
    if (remaining > 0.0) {
        out["advanced"] = false;
        out["remaining_seconds"] = round_ms(remaining);
        return out;
    }

    if (s->phase == Phase::Testing) {
        const auto r = make_record(*s, now);
        s->records.push_back(r);
        log_record(r);
    }
    log_event(*s, "advanced", {{"phase", to_string(s->phase)}, {"index", s->cursor}});
    s->answer.reset();
    s->dispatched_at.reset();
    ++s->cursor;
    if (s->phase == Phase::Training && s->cursor >= bank_.training.size()) {
        s->phase = Phase::Testing;
        s->cursor = 0;
    } else if (s->phase == Phase::Testing && s->cursor >= s->testing.size()) {
        s->phase = Phase::Survey;
        s->cursor = 0;
    }
    snapshot(*s);
    out["advanced"] = true;
    out["phase"] = to_string(s->phase);
    return out;
}

Json SessionService::summary(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    touch_or_expire(*s, clock_());
    if (s->phase != Phase::Done) {
        fail(ErrorKind::State, std::string("session incomplete (phase ") + to_string(s->phase) + ")");
    }
    sim::MetricsAccumulator acc("session", false);
    acc.add_session(s->records);
    Json out = sim::to_json(acc.finish(0, 1));
    out["session"] = s->id;
    if (s->survey) out["time_usage"] = *s->survey;
    return out;
}

std::vector<sim::TrialRecord> SessionService::records(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mutex);
    return s->records;
}

void SessionService::log_event(const Session& s, const std::string& type, Json detail) {
    if (!options_.state_dir) return;
    Json line;
    line["session"] = s.id;
    line["event"] = type;
    line["at"] = clock_() - s.created;
    line["detail"] = std::move(detail);
    const auto text = line.dump() + "\n";
    std::lock_guard lock(log_mutex_);
    event_log_ << text << std::flush;
}

void SessionService::log_record(const sim::TrialRecord& r) {
    if (!options_.state_dir) return;
    const auto text = sim::to_json(r).dump() + "\n";
    std::lock_guard lock(log_mutex_);
    trial_log_ << text << std::flush;
}

void SessionService::snapshot(const Session& s) {
    if (!options_.state_dir) return;
    Json doc = make_document("session_snapshot");
    doc["session"] = s.id;
    doc["group"] = alloc::to_string(s.group);
    doc["permutation_seed"] = s.permutation_seed;
    doc["phase"] = to_string(s.phase);
    doc["cursor"] = s.cursor;
    doc["completed_trials"] = s.records.size();
    doc["created"] = s.created;
    doc["updated"] = s.updated;
    if (s.survey) doc["time_usage"] = *s.survey;
    const auto dir = *options_.state_dir / "sessions";
    const auto tmp = dir / (s.id + ".json.tmp");
    write_json_file(tmp, doc);
    std::filesystem::rename(tmp, dir / (s.id + ".json"));
}

}  // namespace deanchor::service
