#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <thread>

#include "oneedit/interpreter.hpp"
#include "oneedit/kg_io.hpp"
#include "oneedit/service.hpp"
#include "test_util.hpp"

using namespace oneedit;
using nlohmann::json;
using testutil::T;
namespace fs = std::filesystem;

namespace {

World world() {
    SchemaRegistry s;
    s.add(testutil::functional("President"));
    s.add(testutil::reversible("Wife", "Husband"));
    s.add(testutil::reversible("Husband", "Wife"));
    s.add(testutil::functional("Spouse"));
    s.add(testutil::functional("FirstLady"));
    s.add(testutil::functional("Capital"));
    World w;
    w.kg = KnowledgeGraph(s);
    w.kg.upsert(T("Biden", "Spouse", "Jill"));
    w.kg.upsert(T("France", "Capital", "Paris"));
    for (const auto& t : w.kg.triples()) w.base[{t.subject, t.relation}][t.object] = Score{0, 1};
    w.rules = parse_rules("President(X,Y) & Spouse(Y,Z) -> FirstLady(X,Z)");
    return w;
}

SessionConfig config(Backend b = Backend::Codebook, std::size_t n = 0) {
    SessionConfig c;
    c.model.backend = b;
    c.model.seed = 4;
    c.controller.augment.n = n;
    return c;
}

int status_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ServiceError& e) {
        return e.status();
    }
    return 200;
}

std::string first_edited_key(const json& response) {
    for (const auto& item : response["receipt"]) {
        if (item["action"] == "edited") return item["key"].get<std::string>();
    }
    return {};
}

}  // namespace

TEST(Session, CoverageEditRollsBackEarlierKey) {
    Session s(world(), config());
    auto r1 = s.edit("u1", T("USA", "President", "Trump"));
    const auto k_trump = first_edited_key(r1);
    auto r2 = s.edit("u2", T("USA", "President", "Biden"), "Change the President of the USA to Biden");
    EXPECT_EQ(r2["conflict"]["kind"], "Coverage");
    EXPECT_EQ(r2["conflict"]["existingForward"]["o"], "Trump");
    ASSERT_EQ(r2["plan"]["rollbacks"].size(), 1u);
    EXPECT_EQ(r2["plan"]["rollbacks"][0]["key"], k_trump);
    EXPECT_EQ(r2["receipt"][0]["action"], "rolled_back");
    EXPECT_EQ(r2["receipt"][1]["action"], "edited");
    EXPECT_EQ(r2["dsl"], "EDIT (USA | President | Biden)");
    EXPECT_EQ(s.query("USA", "President")["answer"], "Biden");
}

TEST(Session, RepeatEditIsAlreadyPresent) {
    Session s(world(), config());
    s.edit("u1", T("USA", "President", "Biden"));
    auto r = s.edit("u1", T("USA", "President", "Biden"));
    EXPECT_EQ(r["note"], "AlreadyPresent");
    EXPECT_EQ(r["conflict"]["kind"], "None");
    EXPECT_TRUE(r["plan"]["edits"].empty());
    EXPECT_TRUE(r["receipt"].empty());
    EXPECT_EQ(s.last_request_id(), 2u);
}

TEST(Session, RequestErrors) {
    Session s(world(), config());
    EXPECT_EQ(status_of([&] { s.edit("u", T("USA", "Vice", "Harris")); }), 422);
    EXPECT_EQ(status_of([&] { s.edit("u", T("USA", " ", "Harris")); }), 400);
    EXPECT_EQ(status_of([&] { s.rollback("u", "garbage"); }), 404);
    EXPECT_EQ(status_of([&] { s.rollback("u", "k000009-0000000000000001"); }), 404);
    EXPECT_EQ(status_of([&] { s.query("Atlantis", "President"); }), 404);
    EXPECT_EQ(s.last_request_id(), 0u);
}

TEST(Session, StrictModeConflictIs409) {
    auto cfg = config();
    cfg.controller.strict = true;
    Session s(world(), cfg);
    try {
        s.edit("u", T("France", "Capital", "Lyon"));
        FAIL();
    } catch (const ServiceError& e) {
        EXPECT_EQ(e.status(), 409);
        EXPECT_EQ(e.body()["conflict"]["kind"], "Coverage");
    }
    EXPECT_TRUE(s.audit().empty());
}

TEST(Session, RollbackMaliciousEditRestoresPriorAnswer) {
    Session s(world(), config(Backend::Direct));
    auto bad = s.edit("mallory", T("France", "Capital", "Lyon"));
    EXPECT_EQ(s.query("France", "Capital")["answer"], "Lyon");
    auto r = s.rollback("admin", first_edited_key(bad));
    EXPECT_EQ(s.query("France", "Capital")["answer"], "Paris");
    EXPECT_FALSE(s.workspace().kg.contains(T("France", "Capital", "Lyon")));
    EXPECT_TRUE(s.workspace().kg.contains(T("France", "Capital", "Paris")));
    EXPECT_EQ(r["receipt"].back()["action"], "graph_added");
}

TEST(Session, RollbackOfSupersedingEditReinstatesEarlierOne) {
    Session s(world(), config());
    s.edit("u1", T("USA", "President", "Trump"));
    auto r2 = s.edit("u2", T("USA", "President", "Biden"));
    auto r = s.rollback("u1", first_edited_key(r2));
    EXPECT_EQ(s.query("USA", "President")["answer"], "Trump");
    EXPECT_FALSE(s.query("USA", "President")["provenance"].is_null());
    EXPECT_TRUE(s.workspace().kg.contains(T("USA", "President", "Trump")));
    std::size_t active = 0;
    for (const auto* e : s.workspace().cache.active_entries()) active += e->triple.subject == "USA";
    EXPECT_EQ(active, 1u);
}

TEST(Session, RollbackSupersededKeyIs410) {
    Session s(world(), config());
    auto r1 = s.edit("u1", T("USA", "President", "Trump"));
    s.edit("u2", T("USA", "President", "Biden"));
    EXPECT_EQ(status_of([&] { s.rollback("u1", first_edited_key(r1)); }), 410);
}

TEST(Session, RollbackOnlyEditReturnsToInitialState) {
    for (auto b : {Backend::Codebook, Backend::Direct}) {
        for (bool use_controller : {true, false}) {
            auto cfg = config(b, 0);
            cfg.model.noise_rate = 1.0;
            cfg.use_controller = use_controller;
            const Session initial(world(), cfg);
            Session s(world(), cfg);
            auto r = s.edit("u", T("Biden", "Wife", "Jill"));
            s.rollback("u", first_edited_key(r));
            EXPECT_EQ(s.workspace().kg, initial.workspace().kg);
            EXPECT_EQ(s.workspace().model.scores(), initial.workspace().model.scores());
            EXPECT_TRUE(s.workspace().cache.active_entries().empty());
        }
    }
}

TEST(Session, RollbackLeavesAugmentationsOfExistingFacts) {
    const Session initial(world(), config(Backend::Codebook, 4));
    Session s(world(), config(Backend::Codebook, 4));
    auto r = s.edit("u", T("Biden", "Wife", "Jill"));
    ASSERT_EQ(r["plan"]["edits"].size(), 2u);
    ASSERT_FALSE(r["plan"]["augmentations"].empty());
    s.rollback("u", first_edited_key(r));
    EXPECT_EQ(s.workspace().kg, initial.workspace().kg);
    for (const auto* e : s.workspace().cache.active_entries()) {
        EXPECT_TRUE(initial.workspace().kg.contains(e->triple));
    }
}

TEST(Session, ReverseTwinRolledBackTogether) {
    Session s(world(), config());
    auto r = s.edit("u", T("Biden", "Wife", "Jill"));
    auto rb = s.rollback("u", first_edited_key(r));
    EXPECT_EQ(rb["receipt"].size(), 2u);
    EXPECT_TRUE(s.workspace().cache.active_entries().empty());
    EXPECT_TRUE(s.workspace().kg.lookup("Jill", "Husband").empty());
}

TEST(Session, QueryProvenance) {
    Session s(world(), config());
    auto r = s.edit("u", T("USA", "President", "Biden"));
    auto q = s.query("USA", "President");
    EXPECT_EQ(q["answer"], "Biden");
    EXPECT_EQ(q["provenance"], first_edited_key(r));
    EXPECT_TRUE(s.query("France", "Capital")["provenance"].is_null());
}

TEST(Session, HistoryFilters) {
    Session s(world(), config());
    s.edit("u1", T("USA", "President", "Trump"));
    auto r2 = s.edit("u2", T("USA", "President", "Biden"));
    s.edit("u1", T("Biden", "Wife", "Jill"));
    EXPECT_EQ(s.history({}).size(), 3u);
    auto u2 = s.history({"u2", std::nullopt});
    ASSERT_EQ(u2.size(), 1u);
    EXPECT_EQ(u2[0]["requestId"], 2);
    auto jill = s.history({std::nullopt, "Jill"});
    ASSERT_EQ(jill.size(), 1u);
    EXPECT_EQ(jill[0]["requestId"], 3);
    EXPECT_EQ(s.history({"u1", "USA"}).size(), 1u);
    auto all = s.history({});
    EXPECT_EQ(all[0]["status"].begin().value(), "RolledBack");
    EXPECT_EQ(all[1]["status"][first_edited_key(r2)], "Active");
    for (std::size_t i = 1; i < all.size(); ++i) EXPECT_LT(all[i - 1]["requestId"], all[i]["requestId"]);
}

TEST(Session, Neighborhood) {
    Session s(world(), config());
    auto n = s.neighborhood("Biden", 8);
    EXPECT_EQ(n["triples"].size(), 1u);
    EXPECT_EQ(n["edges"][0]["target"], "Jill");
    EXPECT_EQ(n["nodes"], json::array({"Biden", "Jill"}));
    EXPECT_TRUE(s.neighborhood("Biden", 0)["triples"].empty());
}

TEST(Session, BareModeEditsModelOnly) {
    auto cfg = config(Backend::Direct);
    cfg.use_controller = false;
    Session s(world(), cfg);
    auto r = s.edit("u", T("France", "Capital", "Lyon"));
    EXPECT_FALSE(r.contains("plan"));
    EXPECT_TRUE(s.workspace().kg.contains(T("France", "Capital", "Paris")));
    EXPECT_EQ(s.query("France", "Capital")["answer"], "Lyon");
}

TEST(Session, AuditReplayReproducesState) {
    Session s(world(), config(Backend::Direct, 3));
    auto r1 = s.edit("u1", T("USA", "President", "Trump"));
    s.edit("u2", T("USA", "President", "Biden"));
    s.edit("u3", T("Biden", "Wife", "Jill"));
    s.rollback("u1", first_edited_key(s.audit()[1].response));
    Session replayed(world(), config(Backend::Direct, 3));
    for (const auto& e : s.audit()) replayed.replay(e);
    EXPECT_TRUE(replayed.same_state(s));

    AuditEntry forged = s.audit()[0];
    forged.response["requestId"] = 99;
    Session other(world(), config(Backend::Direct, 3));
    EXPECT_THROW(other.replay(forged), Error);
}

TEST(EditBody, Validation) {
    EXPECT_EQ(status_of([] { parse_edit_body(json::array()); }), 400);
    EXPECT_EQ(status_of([] { parse_edit_body(json::object()); }), 400);
    EXPECT_EQ(status_of([] { parse_edit_body({{"text", 3}}); }), 400);
    EXPECT_EQ(status_of([] { parse_edit_body({{"triple", {{"s", "a"}}}}); }), 400);
    EXPECT_EQ(status_of([] { parse_edit_body({{"text", "x"}, {"triple", {{"s", "a"}, {"r", "b"}, {"o", "c"}}}}); }), 400);
    EXPECT_EQ(parse_edit_body({{"text", "x"}}).text, "x");
}

TEST(Service, GenerateIntentAnswersFromQueryPath) {
    KnowledgeService svc(world(), config(), {});
    svc.handle_edit("u", {{"text", "Change the President of the USA to Biden"}});
    auto r = svc.handle_edit("u", {{"text", "Who is the President of the USA?"}});
    EXPECT_EQ(r["intent"], "generate");
    EXPECT_EQ(r["answer"]["answer"], "Biden");
    auto miss = svc.handle_edit("u", {{"text", "What is the highest mountain in the USA?"}});
    EXPECT_EQ(miss["intent"], "generate");
    EXPECT_TRUE(miss["answer"].is_null());
    EXPECT_EQ(svc.snapshot()->last_request_id(), 1u);
    EXPECT_EQ(svc.handle_query({{"text", "Who is the President of the USA?"}})["answer"], "Biden");
}

TEST(Service, FullQueueIs503) {
    ServiceOptions opts;
    opts.queue_capacity = 0;
    KnowledgeService svc(world(), config(), opts);
    EXPECT_EQ(status_of([&] { svc.handle_edit("u", {{"triple", {{"s", "USA"}, {"r", "President"}, {"o", "B"}}}}); }), 503);
    EXPECT_EQ(svc.handle_health()["queueCapacity"], 0);
}

TEST(Service, ConcurrentRequestsLinearize) {
    ServiceOptions opts;
    opts.queue_capacity = 1024;
    KnowledgeService svc(world(), config(Backend::Direct, 2), opts);
    const std::string subjects[] = {"USA", "France", "Biden", "Jill", "Mike"};
    const std::string relations[] = {"President", "Capital", "Wife", "Husband"};
    std::vector<std::thread> threads;
    std::atomic<int> ok{0};
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            std::mt19937_64 rng(100 + t);
            for (int i = 0; i < 25; ++i) {
                try {
                    if (rng() % 5 == 0) {
                        auto snap = svc.snapshot();
                        const auto& entries = snap->workspace().cache.entries();
                        if (entries.empty()) continue;
                        svc.handle_rollback("u" + std::to_string(t), entries[rng() % entries.size()].key.str());
                    } else {
                        svc.handle_edit("u" + std::to_string(t),
                                        {{"triple", {{"s", subjects[rng() % 5]}, {"r", relations[rng() % 4]},
                                                     {"o", "o" + std::to_string(rng() % 4)}}}});
                    }
                    ++ok;
                } catch (const ServiceError& e) {
                    ASSERT_EQ(e.status(), 410);
                }
            }
        });
    }
    for (auto& th : threads) th.join();
    auto snap = svc.snapshot();
    EXPECT_EQ(snap->audit().size(), static_cast<std::size_t>(ok.load()));
    Session replayed(world(), config(Backend::Direct, 2));
    for (const auto& e : snap->audit()) replayed.replay(e);
    EXPECT_TRUE(replayed.same_state(*snap));
}

TEST(Store, RestartReproducesState) {
    const auto dir = testutil::scratch_dir("restart");
    std::shared_ptr<const Session> before;
    {
        ServiceOptions opts;
        opts.data_dir = dir;
        KnowledgeService svc(world(), config(Backend::Direct, 3), opts);
        svc.handle_edit("u1", {{"text", "Change the President of the USA to Trump"}});
        auto r = svc.handle_edit("u2", {{"text", "Change the President of the USA to Biden"}});
        svc.handle_edit("u3", {{"triple", {{"s", "Biden"}, {"r", "Wife"}, {"o", "Jill"}}}});
        svc.handle_rollback("u1", first_edited_key(r));
        before = svc.snapshot();
    }
    auto reopened = KnowledgeService::open(dir);
    EXPECT_TRUE(reopened->snapshot()->same_state(*before));
    // It keeps serving and persisting.
    reopened->handle_edit("u4", {{"triple", {{"s", "France"}, {"r", "Capital"}, {"o", "Lyon"}}}});
    auto after = reopened->snapshot();
    reopened.reset();
    EXPECT_TRUE(store::restore(dir).same_state(*after));
    EXPECT_THROW(store::initialize(dir, *after), Error);
    fs::remove_all(dir);
}

TEST(Store, TornTailIsDropped) {
    const auto dir = testutil::scratch_dir("torn");
    std::shared_ptr<const Session> one;
    {
        ServiceOptions opts;
        opts.data_dir = dir;
        KnowledgeService svc(world(), config(Backend::Direct), opts);
        svc.handle_edit("u1", {{"triple", {{"s", "USA"}, {"r", "President"}, {"o", "Trump"}}}});
        one = svc.snapshot();
        svc.handle_edit("u1", {{"triple", {{"s", "USA"}, {"r", "President"}, {"o", "Biden"}}}});
    }
    const auto audit = read_file(dir / "audit.jsonl");
    const auto first_end = audit.find('\n') + 1;
    {
        std::ofstream out(dir / "audit.jsonl", std::ios::trunc | std::ios::binary);
        out << audit.substr(0, first_end + (audit.size() - first_end) / 2);
    }
    auto restored = store::restore(dir);
    EXPECT_TRUE(restored.same_state(*one));
    EXPECT_EQ(read_file(dir / "audit.jsonl"), audit.substr(0, first_end));
    fs::remove_all(dir);
}

TEST(Store, StateFilesMustAgreeWithAudit) {
    const auto dir = testutil::scratch_dir("disagree");
    {
        ServiceOptions opts;
        opts.data_dir = dir;
        KnowledgeService svc(world(), config(), opts);
        svc.handle_edit("u1", {{"triple", {{"s", "USA"}, {"r", "President"}, {"o", "Trump"}}}});
    }
    {
        std::ofstream out(dir / "kg.jsonl", std::ios::app);
        out << R"({"s":"X","r":"Capital","o":"Y"})" << "\n";
    }
    EXPECT_THROW(store::restore(dir), Error);
    fs::remove_all(dir);
}
