#include <doctest.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "deanchor/error.hpp"
#include "deanchor/session_service.hpp"
#include "support.hpp"

using namespace deanchor;
using namespace deanchor::service;
namespace ts = testing_support;

namespace {

const sim::Experiment2Design& design() {
    static const sim::Experiment2Design d(ts::world(), 11);
    return d;
}

TrialBank bank(int training = 3) { return make_trial_bank(ts::world(), design(), training, 11); }

struct FakeClock {
    std::shared_ptr<double> now = std::make_shared<double>(1000.0);
    Clock clock() const {
        auto p = now;
        return [p] { return *p; };
    }
    void advance(double s) const { *now += s; }
};

Json body(Json j) {
    j["schema_version"] = kSchemaVersion;
    return j;
}

Json answer(const Json& trial, const char* decision = "pass", const char* confidence = "medium") {
    Json j = body({{"trial", trial["trial"]}, {"decision", decision}});
    if (confidence) j["confidence"] = confidence;
    return j;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Parameter;
}

// Checks a payload against the group's disclosure rules.
void audit(const Json& p, PolicyKind group) {
    if (!p.contains("trial")) return;
    if (group == PolicyKind::HumanOnly) {
        CHECK_FALSE(p.contains("ai"));
        if (p.contains("feedback")) CHECK_FALSE(p["feedback"].contains("ai_prediction"));
    } else {
        REQUIRE(p.contains("ai"));
        CHECK(p["ai"].contains("prediction"));
        CHECK(p["ai"].contains("confidence") == (group == PolicyKind::ConfidenceBasedExplained));
    }
    if (p["phase"] == "testing") CHECK_FALSE(p.contains("feedback"));
    const auto text = p.dump();
    CHECK(text.find("true_label") == std::string::npos);
    CHECK(text.find("\"bin\"") == std::string::npos);
}

// Runs a whole session, answering each trial after `wait` seconds.
std::string complete(SessionService& svc, FakeClock& clk, const std::string& group, double wait,
                     std::vector<Json>* payloads = nullptr) {
    const auto id = svc.create_session(body({{"group", group}}))["session"].get<std::string>();
    for (;;) {
        const auto t = svc.next_trial(id);
        if (payloads) payloads->push_back(t);
        if (t["phase"] == "survey") {
            svc.submit_answer(id, body({{"time_usage", "often"}}));
            break;
        }
        clk.advance(wait);
        svc.submit_answer(id, answer(t, t["trial"].get<int>() % 2 ? "pass" : "fail"));
        const double alloc = t["allocated_seconds"].get<double>();
        if (alloc > wait) clk.advance(alloc - wait);
        const auto adv = svc.advance(id);
        REQUIRE(adv["advanced"] == true);
    }
    return id;
}

}  // namespace

TEST_CASE("training bank draws from the training split") {
    const auto b = bank(15);
    CHECK(b.training.size() == 15);
    CHECK(b.testing.size() == 40);
    for (const auto& t : b.testing) CHECK(t.features.size() == 10);
    CHECK(b.testing[0].features[0].label.size() > 0);
}

TEST_CASE("group assignment is uniform and seeded") {
    FakeClock clk;
    SessionService svc(bank(0), {.seed = 1}, clk.clock());
    std::map<std::string, int> counts;
    for (int i = 0; i < 5000; ++i) ++counts[svc.create_session(nullptr)["group"].get<std::string>()];
    CHECK(counts.size() == 5);
    for (const auto& [g, n] : counts) CHECK(std::abs(n / 5000.0 - 0.2) <= 0.02);

    const auto a = svc.create_session(body({{"seed", 77}}));
    const auto b = svc.create_session(body({{"seed", 77}}));
    CHECK(a["group"] == b["group"]);
    CHECK(a["session"] != b["session"]);
    CHECK(a["session"].get<std::string>().size() == 32);

    CHECK(svc.create_session(body({{"group", "confidence_explained"}}))["group"] == "confidence_explained");
    CHECK(kind_of([&] { svc.create_session(body({{"group", "nobody"}})); }) == ErrorKind::Validation);
    CHECK(kind_of([&] { svc.create_session(Json{{"group", "constant"}}); }) == ErrorKind::Validation);
}

TEST_CASE("payloads disclose only what the group may see") {
    for (auto g : SessionService::kGroups) {
        FakeClock clk;
        SessionService svc(bank(), {.seed = 2}, clk.clock());
        std::vector<Json> payloads;
        const auto id = complete(svc, clk, alloc::to_string(g), 30.0, &payloads);
        CHECK(payloads.size() == 3 + 40 + 1);
        for (const auto& p : payloads) audit(p, g);
        CHECK(svc.next_trial(id)["phase"] == "done");
    }
}

TEST_CASE("training feedback reveals the answer after attempting") {
    FakeClock clk;
    SessionService svc(bank(), {}, clk.clock());
    const auto id = svc.create_session(body({{"group", "constant"}}))["session"].get<std::string>();
    const auto t = svc.next_trial(id);
    CHECK(t["phase"] == "training");
    CHECK_FALSE(t.contains("feedback"));
    const auto ack = svc.submit_answer(id, answer(t, "pass", nullptr));
    CHECK(ack["feedback"].contains("correct_answer"));
    CHECK(ack["feedback"].contains("ai_prediction"));
    const auto again = svc.next_trial(id);
    CHECK(again["feedback"]["correct_answer"] == ack["feedback"]["correct_answer"]);
    CHECK(kind_of([&] { svc.submit_answer(id, answer(t, "fail", nullptr)); }) == ErrorKind::Conflict);

    FakeClock clk2;
    SessionService human(bank(), {}, clk2.clock());
    const auto hid = human.create_session(body({{"group", "human_only"}}))["session"].get<std::string>();
    const auto ht = human.next_trial(hid);
    const auto hack = human.submit_answer(hid, answer(ht, "pass", nullptr));
    CHECK(hack["feedback"].contains("correct_answer"));
    CHECK_FALSE(hack["feedback"].contains("ai_prediction"));
}

TEST_CASE("server-side timing on testing trials") {
    FakeClock clk;
    SessionService svc(bank(0), {}, clk.clock());
    const auto id = svc.create_session(body({{"group", "confidence"}}))["session"].get<std::string>();
    bool saw_short = false, saw_long = false;
    for (int i = 0; i < 40; ++i) {
        const auto t = svc.next_trial(id);
        const double alloc = t["allocated_seconds"].get<double>();
        if (alloc == 10.0 && !saw_short) {
            saw_short = true;
            CHECK_FALSE(t["ai"].contains("confidence"));
            clk.advance(7.0);
            svc.submit_answer(id, answer(t));
            clk.advance(1.0);
            const auto blocked = svc.advance(id);
            CHECK(blocked["advanced"] == false);
            CHECK(blocked["remaining_seconds"].get<double>() == doctest::Approx(2.0));
            clk.advance(2.0);
        } else if (alloc == 25.0 && !saw_long) {
            saw_long = true;
            clk.advance(26.0);
            CHECK(svc.submit_answer(id, answer(t))["elapsed"].get<double>() == doctest::Approx(26.0));
        } else {
            clk.advance(alloc);
            svc.submit_answer(id, answer(t));
        }
        CHECK(svc.advance(id)["advanced"] == true);
    }
    CHECK(saw_short);
    CHECK(saw_long);
    for (const auto& r : svc.records(id)) CHECK(r.elapsed >= r.allocated);
}

TEST_CASE("answers may be revised until the time is up, then conflict") {
    FakeClock clk;
    SessionService svc(bank(0), {}, clk.clock());
    const auto id = svc.create_session(body({{"group", "constant"}}))["session"].get<std::string>();
    const auto t = svc.next_trial(id);
    clk.advance(3.0);
    svc.submit_answer(id, answer(t, "pass", "low"));
    clk.advance(2.0);
    CHECK(svc.submit_answer(id, answer(t, "fail", "high"))["revised"] == true);
    clk.advance(20.0);
    CHECK(kind_of([&] { svc.submit_answer(id, answer(t, "pass", "low")); }) == ErrorKind::Conflict);
    svc.advance(id);
    const auto recs = svc.records(id);
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].decision == 0);
    CHECK(recs[0].self_confidence == sim::SelfConfidence::High);
    CHECK(*recs[0].answer_latency == doctest::Approx(5.0));
    CHECK(recs[0].elapsed == doctest::Approx(25.0));
}

TEST_CASE("late answers are accepted once") {
    FakeClock clk;
    SessionService svc(bank(0), {}, clk.clock());
    const auto id = svc.create_session(body({{"group", "human_only"}}))["session"].get<std::string>();
    const auto t = svc.next_trial(id);
    clk.advance(26.0);
    svc.submit_answer(id, answer(t, "pass"));
    CHECK(kind_of([&] { svc.submit_answer(id, answer(t, "fail")); }) == ErrorKind::Conflict);
    CHECK(svc.advance(id)["advanced"] == true);
    CHECK(svc.records(id)[0].decision == 1);
}

TEST_CASE("request errors") {
    FakeClock clk;
    SessionService svc(bank(0), {}, clk.clock());
    CHECK(kind_of([&] { svc.next_trial("feedface"); }) == ErrorKind::NotFound);
    const auto id = svc.create_session(body({{"group", "random"}}))["session"].get<std::string>();
    CHECK(kind_of([&] { svc.submit_answer(id, body({{"trial", 0}, {"decision", "pass"}})); }) == ErrorKind::State);
    const auto t = svc.next_trial(id);
    CHECK(kind_of([&] { svc.advance(id); }) == ErrorKind::State);  // no answer yet
    Json wrong = answer(t);
    wrong["trial"] = t["trial"].get<int>() + 1;
    CHECK(kind_of([&] { svc.submit_answer(id, wrong); }) == ErrorKind::State);
    CHECK(kind_of([&] { svc.submit_answer(id, answer(t, "maybe")); }) == ErrorKind::Validation);
    CHECK(kind_of([&] { svc.submit_answer(id, answer(t, "pass", nullptr)); }) == ErrorKind::Validation);
    CHECK(kind_of([&] { svc.submit_answer(id, answer(t, "pass", "very")); }) == ErrorKind::Validation);
    Json no_version = answer(t);
    no_version.erase("schema_version");
    CHECK(kind_of([&] { svc.submit_answer(id, no_version); }) == ErrorKind::Validation);
    CHECK(kind_of([&] { svc.summary(id); }) == ErrorKind::State);

    clk.advance(7201.0);
    CHECK(kind_of([&] { svc.next_trial(id); }) == ErrorKind::Gone);
    CHECK(kind_of([&] { svc.submit_answer(id, answer(t)); }) == ErrorKind::Gone);
}

TEST_CASE("client timing is stored but never enforced") {
    FakeClock clk;
    SessionService svc(bank(0), {}, clk.clock());
    const auto id = svc.create_session(body({{"group", "constant"}}))["session"].get<std::string>();
    const auto t = svc.next_trial(id);
    clk.advance(4.0);
    Json a = answer(t);
    a["client_elapsed_ms"] = 60000;
    svc.submit_answer(id, a);
    CHECK(svc.advance(id)["advanced"] == false);
    clk.advance(14.0);
    CHECK(svc.advance(id)["advanced"] == true);
    const auto r = svc.records(id).at(0);
    CHECK(*r.answer_latency == doctest::Approx(4.0));
    CHECK(r.elapsed == doctest::Approx(18.0));
    CHECK(*r.client_elapsed == doctest::Approx(60.0));
}

TEST_CASE("summary equals re-aggregating the trial log") {
    const auto dir = ts::scratch("service_state");
    FakeClock clk;
    SessionService svc(bank(), {.seed = 4, .state_dir = dir}, clk.clock());
    std::vector<std::string> ids;
    for (const char* g : {"human_only", "confidence_explained", "random"}) ids.push_back(complete(svc, clk, g, 12.0));

    std::ifstream log(dir / "trials.jsonl");
    std::map<std::string, std::string> per_session;
    std::string line;
    while (std::getline(log, line)) {
        per_session[Json::parse(line)["session"].get<std::string>()] += line + "\n";
    }
    for (const auto& id : ids) {
        std::istringstream in(per_session[id]);
        const auto offline = sim::aggregate_log(in, "session", false);
        auto summary = svc.summary(id);
        CHECK(summary["time_usage"] == "often");
        summary.erase("session");
        summary.erase("time_usage");
        CHECK(sim::metrics_from_json(summary) == offline);
        CHECK(summary == sim::to_json(offline));
        CHECK(std::filesystem::exists(dir / "sessions" / (id + ".json")));
    }
    const auto human = svc.summary(ids[0]);
    for (const auto& cell : human["groups"][0]["cells"]) CHECK_FALSE(cell.contains("agreement"));
    CHECK(std::filesystem::file_size(dir / "events.jsonl") > 0);
}

TEST_CASE("concurrent sessions stay isolated") {
    auto t = std::make_shared<std::atomic<long>>(0);
    Clock clock = [t] { return 30.0 * static_cast<double>(t->fetch_add(1)); };
    SessionService svc(bank(), {.seed = 8, .expiry_seconds = 1e12}, clock);
    std::vector<std::string> ids(8);
    std::vector<std::thread> pool;
    std::atomic<int> failures{0};
    for (int k = 0; k < 8; ++k) {
        pool.emplace_back([&, k] {
            try {
                const auto id = svc.create_session(body({{"group", alloc::to_string(SessionService::kGroups[k % 5])}}))["session"]
                                    .get<std::string>();
                ids[static_cast<std::size_t>(k)] = id;
                for (;;) {
                    const auto p = svc.next_trial(id);
                    if (p["phase"] == "survey") {
                        svc.submit_answer(id, body({{"time_usage", "always"}}));
                        break;
                    }
                    svc.submit_answer(id, answer(p));
                    while (svc.advance(id)["advanced"] != true) {
                    }
                }
            } catch (...) {
                ++failures;
            }
        });
    }
    for (auto& th : pool) th.join();
    CHECK(failures == 0);
    for (const auto& id : ids) {
        const auto recs = svc.records(id);
        CHECK(recs.size() == 40);
        for (const auto& r : recs) CHECK(r.session == id);
    }
}
