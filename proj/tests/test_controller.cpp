#include <gtest/gtest.h>

#include <random>

#include "oneedit/controller.hpp"
#include "test_util.hpp"

using namespace oneedit;
using testutil::T;

namespace {

SchemaRegistry schemas() {
    SchemaRegistry s;
    s.add(testutil::functional("President"));
    s.add(testutil::functional("Spouse"));
    s.add(testutil::functional("FirstLady"));
    s.add(testutil::reversible("Wife", "Husband"));
    s.add(testutil::reversible("Husband", "Wife"));
    s.add(testutil::multi("Child"));
    s.add(testutil::functional("BornIn"));
    return s;
}

Workspace workspace(KnowledgeGraph g, Backend b = Backend::Codebook, double noise = 0.0) {
    ModelConfig c;
    c.backend = b;
    c.noise_rate = noise;
    c.seed = 3;
    ScoreTable base;
    for (const auto& t : g.triples()) base[{t.subject, t.relation}][t.object] = Score{0, 1};
    return {std::move(g), SimulatedModel(c, base), {}};
}

Controller controller(std::size_t n, std::string rules = "", AliasTable aliases = {}, bool strict = false) {
    ControllerConfig cfg;
    cfg.augment.n = n;
    cfg.alias_expansion = !aliases.empty();
    cfg.strict = strict;
    return Controller(parse_rules(rules), std::move(aliases), cfg);
}

AppliedReceipt plan_and_apply(Workspace& ws, const Controller& c, const Triple& t, std::uint64_t id = 0) {
    auto plan = c.plan(ws.kg, ws.model, ws.cache, t);
    return apply_plan(ws, plan, {"u", id});
}

}  // namespace

TEST(CoverageConflict, Examples) {
    KnowledgeGraph g(schemas());
    EXPECT_FALSE(detect_coverage_conflict(g, T("USA", "President", "Biden")));
    g.upsert(T("USA", "President", "Trump"));
    EXPECT_EQ(detect_coverage_conflict(g, T("USA", "President", "Biden")), T("USA", "President", "Trump"));
    EXPECT_FALSE(detect_coverage_conflict(g, T("USA", "President", "Trump")));
    try {
        detect_coverage_conflict(g, T("Biden", "Child", "Hunter"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NonFunctionalRelation);
    }
}

TEST(ReverseConflict, Examples) {
    KnowledgeGraph g(schemas());
    g.upsert(T("Jill", "Husband", "Mike"));
    EXPECT_EQ(detect_reverse_conflict(g, T("Biden", "Wife", "Jill")), T("Jill", "Husband", "Mike"));
    EXPECT_FALSE(detect_reverse_conflict(g, T("Biden", "BornIn", "Scranton")));
    KnowledgeGraph agree(schemas());
    agree.upsert(T("Jill", "Husband", "Biden"));
    EXPECT_FALSE(detect_reverse_conflict(agree, T("Biden", "Wife", "Jill")));
}

TEST(ConflictReport, KindsCarryTheirTriples) {
    KnowledgeGraph g(schemas());
    g.upsert(T("Biden", "Wife", "Neilia"));
    g.upsert(T("Jill", "Husband", "Mike"));
    auto both = classify_conflict(g, T("Biden", "Wife", "Jill"));
    EXPECT_EQ(both.kind, ConflictKind::Both);
    EXPECT_EQ(both.existing_forward, T("Biden", "Wife", "Neilia"));
    EXPECT_EQ(both.existing_reverse, T("Jill", "Husband", "Mike"));
    EXPECT_EQ(classify_conflict(g, T("Biden", "Wife", "Neilia")).kind, ConflictKind::None);
    EXPECT_EQ(classify_conflict(g, T("Joe", "Wife", "Jill")).kind, ConflictKind::Reverse);
    EXPECT_EQ(classify_conflict(g, T("Biden", "Child", "Hunter")).kind, ConflictKind::None);
}

TEST(Plan, CoverageRollsBackEarlierEdit) {
    auto ws = workspace(KnowledgeGraph(schemas()), Backend::Direct);
    const auto c = controller(0);
    auto r1 = plan_and_apply(ws, c, T("USA", "President", "Trump"), 1);
    const auto k1 = *r1.at(0).key;

    auto plan = c.plan(ws.kg, ws.model, ws.cache, T("USA", "President", "Biden"));
    EXPECT_EQ(plan.rollback_keys(), std::vector<EditKey>{k1});
    EXPECT_EQ(plan.edits, std::vector<Triple>{T("USA", "President", "Biden")});
    EXPECT_TRUE(plan.augmentations.empty());

    auto receipt = apply_plan(ws, plan, {"u", 2});
    EXPECT_EQ(ws.kg.triples(), std::set<Triple>{T("USA", "President", "Biden")});
    EXPECT_EQ(ws.model.query("USA", "President")->answer, "Biden");
    EXPECT_FALSE(ws.model.score_of({"USA", "President"}, "Trump"));
    EXPECT_EQ(ws.cache.find(k1)->status, EditStatus::RolledBack);
    EXPECT_EQ(ws.cache.find(*receipt.back().key)->status, EditStatus::Active);
    EXPECT_EQ(receipt.front().action, ReceiptItem::Action::RolledBack);
}

TEST(Plan, ReverseTwinAdded) {
    auto ws = workspace(KnowledgeGraph(schemas()));
    auto plan = controller(0).plan(ws.kg, ws.model, ws.cache, T("Biden", "Wife", "Jill"));
    EXPECT_TRUE(plan.rollbacks.empty());
    EXPECT_EQ(plan.edits, (std::vector<Triple>{T("Biden", "Wife", "Jill"), T("Jill", "Husband", "Biden")}));
}

TEST(Plan, ReverseConflictDisplacesBothDirections) {
    KnowledgeGraph g(schemas());
    g.upsert(T("Jill", "Husband", "Mike"));
    g.upsert(T("Mike", "Wife", "Jill"));
    auto ws = workspace(g);
    auto plan = controller(0).plan(ws.kg, ws.model, ws.cache, T("Biden", "Wife", "Jill"));
    std::set<Triple> removed;
    for (const auto& r : plan.rollbacks) removed.insert(r.triple);
    EXPECT_EQ(removed, (std::set<Triple>{T("Jill", "Husband", "Mike"), T("Mike", "Wife", "Jill")}));
    apply_plan(ws, plan);
    EXPECT_TRUE(ws.kg.contains(T("Jill", "Husband", "Biden")));
    EXPECT_TRUE(ws.kg.lookup("Mike", "Wife").empty());
}

TEST(Plan, FirstLadyAugmentation) {
    KnowledgeGraph g(schemas());
    g.upsert(T("Biden", "Spouse", "Jill"));
    auto ws = workspace(g);
    auto plan = controller(8, "President(X,Y) & Spouse(Y,Z) -> FirstLady(X,Z)")
                    .plan(ws.kg, ws.model, ws.cache, T("USA", "President", "Biden"));
    EXPECT_EQ(plan.edits, std::vector<Triple>{T("USA", "President", "Biden")});
    const std::set<Triple> aug(plan.augmentations.begin(), plan.augmentations.end());
    EXPECT_TRUE(aug.contains(T("USA", "FirstLady", "Jill")));
    EXPECT_TRUE(aug.contains(T("Biden", "Spouse", "Jill")));
}

TEST(Plan, DerivedRanksBeforeDeepNeighbors) {
    KnowledgeGraph g(schemas());
    g.upsert(T("Biden", "Spouse", "Jill"));
    g.upsert(T("Jill", "BornIn", "Hammonton"));
    auto ws = workspace(g);
    auto plan = controller(2, "President(X,Y) & Spouse(Y,Z) -> FirstLady(X,Z)")
                    .plan(ws.kg, ws.model, ws.cache, T("USA", "President", "Biden"));
    // Layer 1 from USA is only the edit itself; the derived head beats layer-2 neighbors.
    ASSERT_EQ(plan.augmentations.size(), 2u);
    EXPECT_EQ(plan.augmentations[0], T("USA", "FirstLady", "Jill"));
    EXPECT_EQ(plan.augmentations[1], T("Biden", "Spouse", "Jill"));
}

TEST(Plan, AlreadyPresentIsEmpty) {
    KnowledgeGraph g(schemas());
    g.upsert(T("USA", "President", "Biden"));
    auto ws = workspace(g);
    auto plan = controller(8).plan(ws.kg, ws.model, ws.cache, T("USA", "President", "Biden"));
    EXPECT_TRUE(plan.already_present);
    EXPECT_TRUE(plan.empty());
    const auto before = ws;
    EXPECT_TRUE(apply_plan(ws, plan).empty());
    EXPECT_EQ(ws, before);
}

TEST(Plan, AliasExpansion) {
    auto ws = workspace(KnowledgeGraph(schemas()));
    auto plan = controller(0, "", {{"USA", {"United States"}}}).plan(ws.kg, ws.model, ws.cache, T("USA", "President", "Biden"));
    EXPECT_EQ(plan.edits, (std::vector<Triple>{T("USA", "President", "Biden"), T("United States", "President", "Biden")}));
}

TEST(Plan, FileSeededConflict) {
    KnowledgeGraph g(schemas());
    g.upsert(T("USA", "President", "Trump"));
    auto ws = workspace(g);
    auto plan = controller(0).plan(ws.kg, ws.model, ws.cache, T("USA", "President", "Biden"));
    ASSERT_EQ(plan.rollbacks.size(), 1u);
    EXPECT_FALSE(plan.rollbacks[0].key);
    auto receipt = apply_plan(ws, plan);
    EXPECT_EQ(receipt[0].action, ReceiptItem::Action::GraphRemoved);
    EXPECT_EQ(ws.model.query("USA", "President")->answer, "Biden");
    try {
        controller(0, "", {}, true).plan(workspace(g).kg, ws.model, {}, T("USA", "President", "Biden"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::UnresolvableRollback);
    }
}

TEST(Plan, UnknownRelation) {
    auto ws = workspace(KnowledgeGraph(schemas()));
    EXPECT_THROW(controller(0).plan(ws.kg, ws.model, ws.cache, T("France", "Capital", "Paris")), Error);
}

TEST(Apply, ReceiptReplayReproducesState) {
    KnowledgeGraph g(schemas());
    g.upsert(T("Biden", "Spouse", "Jill"));
    g.upsert(T("Biden", "Child", "Hunter"));
    for (auto b : {Backend::Codebook, Backend::Direct}) {
        auto ws = workspace(g, b, 1.0);
        auto plan = controller(2).plan(ws.kg, ws.model, ws.cache, T("USA", "President", "Biden"));
        ASSERT_EQ(plan.edits.size(), 1u);
        ASSERT_EQ(plan.augmentations.size(), 2u);
        const Workspace prior = ws;
        auto receipt = apply_plan(ws, plan, {"u", 1});
        EXPECT_EQ(ws.cache.active_entries().size(), 3u);
        Workspace again = prior;
        replay_receipt(again, receipt, {"u", 1}, 3);
        EXPECT_EQ(again, ws);
        EXPECT_EQ(receipt_from_json(to_json(receipt)), receipt);
    }
}

TEST(Apply, StrongGuaranteeOnFailure) {
    auto ws = workspace(KnowledgeGraph(schemas()));
    EditPlan bogus;
    bogus.request = T("USA", "President", "Biden");
    bogus.edits = {T("USA", "President", "Biden")};
    bogus.rollbacks = {{T("USA", "President", "Trump"), EditKey{42, 7}}};
    const auto before = ws;
    EXPECT_THROW(apply_plan(ws, bogus), Error);
    EXPECT_EQ(ws, before);
}

namespace {

struct FuzzWorld {
    KnowledgeGraph g;
    std::string rules;
};

FuzzWorld fuzz_world(std::mt19937_64& rng) {
    SchemaRegistry s;
    s.add(testutil::reversible("Wife", "Husband"));
    s.add(testutil::reversible("Husband", "Wife"));
    s.add(testutil::functional("Employer"));
    s.add(testutil::functional("Hq"));
    s.add(testutil::functional("WorksIn"));
    s.add(testutil::multi("Knows"));
    KnowledgeGraph g(s);
    const std::string rels[] = {"Wife", "Employer", "Hq", "Knows"};
    for (int i = 0; i < 25; ++i) {
        auto t = T("e" + std::to_string(rng() % 12), rels[rng() % 4], "e" + std::to_string(rng() % 12));
        if (t.subject == t.object) continue;
        if (!g.lookup(t.subject, t.relation).empty() && s.is_functional(t.relation)) continue;
        if (auto twin = reverse_twin(s, t); twin && !g.lookup(twin->subject, twin->relation).empty()) continue;
        g.upsert(t);
        if (auto twin = reverse_twin(s, t)) g.upsert(*twin);
    }
    return {g, "Employer(X,Y) & Hq(Y,Z) -> WorksIn(X,Z)"};
}

}  // namespace

TEST(ControllerProperty, PlanInvariantsUnderRandomEdits) {
    std::mt19937_64 rng(17);
    for (int round = 0; round < 25; ++round) {
        auto fw = fuzz_world(rng);
        const bool rules_on = round % 2 == 0;
        auto c = controller(1 + rng() % 6, fw.rules);
        c.config().augment.rules_enabled = rules_on;
        auto ws = workspace(fw.g);
        const auto& s = ws.kg.schemas();
        const auto rules = parse_rules(fw.rules);
        const std::string rels[] = {"Wife", "Husband", "Employer", "Hq", "Knows"};
        for (int step = 0; step < 30; ++step) {
            auto t = T("e" + std::to_string(rng() % 12), rels[rng() % 5], "e" + std::to_string(rng() % 12));
            auto plan = c.plan(ws.kg, ws.model, ws.cache, t);
            ASSERT_EQ(plan, c.plan(ws.kg, ws.model, ws.cache, t)) << "plan is not deterministic";
            ASSERT_LE(plan.augmentations.size(), c.config().augment.n);
            ASSERT_EQ(plan.edits.empty(), plan.already_present);

            std::set<std::pair<std::string, std::string>> slots;
            std::set<Triple> edits(plan.edits.begin(), plan.edits.end());
            for (const auto* list : {&plan.edits, &plan.augmentations}) {
                for (const auto& x : *list) {
                    if (list == &plan.augmentations) ASSERT_FALSE(edits.contains(x));
                    if (s.is_functional(x.relation)) ASSERT_TRUE(slots.insert({x.subject, x.relation}).second);
                }
            }
            const auto closure = rule_closure(ws.kg, rules, plan.edits, c.config().augment.rule_depth).as_set();
            for (const auto& a : plan.augmentations) {
                if (rules_on) ASSERT_TRUE(ws.kg.contains(a) || closure.contains(a)) << a.to_string();
                else ASSERT_TRUE(ws.kg.contains(a)) << a.to_string();
            }

            apply_plan(ws, plan, {"u", static_cast<std::uint64_t>(step + 1)});

            // Graph and model agree on everything the plan wrote.
            for (const auto* list : {&plan.edits, &plan.augmentations}) {
                for (const auto& x : *list) {
                    ASSERT_TRUE(ws.kg.contains(x));
                    if (s.is_functional(x.relation)) ASSERT_EQ(ws.model.query(x.subject, x.relation)->answer, x.object);
                }
            }
            // One active version per functional slot.
            std::set<std::pair<std::string, std::string>> active_slots;
            for (const auto* e : ws.cache.active_entries()) {
                if (s.is_functional(e->triple.relation)) {
                    ASSERT_TRUE(active_slots.insert({e->triple.subject, e->triple.relation}).second)
                        << e->triple.to_string();
                }
            }
            // Reverse closure for the requested triple.
            if (auto twin = reverse_twin(s, t)) ASSERT_EQ(ws.kg.contains(t), ws.kg.contains(*twin));
            ASSERT_TRUE(ws.kg.index_consistent());
        }
    }
}
