#include <gtest/gtest.h>

#include <random>

#include "oneedit/eval.hpp"
#include "test_util.hpp"

using namespace oneedit;
using testutil::T;

namespace {

SimulatedModel small_model(Backend b = Backend::Codebook, double noise = 0.0, Rational delta = Rational(1, 10)) {
    ModelConfig c;
    c.backend = b;
    c.noise_rate = noise;
    c.locality_noise = delta;
    c.seed = 5;
    ScoreTable base;
    for (int i = 0; i < 40; ++i) {
        base[{"s" + std::to_string(i), "r"}]["a" + std::to_string(i)] = Score{0, 1};
        base[{"s" + std::to_string(i), "r"}]["b" + std::to_string(i)] = Score{0, Rational(19, 20)};
    }
    return SimulatedModel(c, base);
}

EvalCase answer_case(const std::string& s, const std::string& expected, Category c = Category::Reliability) {
    return {{s, "r"}, expected, c, std::nullopt, std::nullopt};
}

EvalCase locality_case(const std::string& s, const std::string& pre) {
    return {{s, "r"}, "", Category::Locality, pre, std::nullopt};
}

}  // namespace

TEST(Reliability, ThreeOfFour) {
    auto m = small_model();
    std::vector<EvalCase> cases{answer_case("s0", "a0"), answer_case("s1", "a1"), answer_case("s2", "a2"),
                                answer_case("s3", "wrong")};
    EXPECT_EQ(eval_reliability(m, cases), (Ratio{3, 4}));
    EXPECT_EQ(eval_reliability(m, cases).value(), Rational(3, 4));
    cases.pop_back();
    EXPECT_EQ(eval_reliability(m, cases).value(), 1);
}

TEST(Reliability, CodebookEditsAllHit) {
    auto m = small_model();
    EditCache cache;
    std::vector<EvalCase> cases;
    for (int i = 0; i < 10; ++i) {
        edit(m, cache, T("s" + std::to_string(i), "r", "new" + std::to_string(i)));
        cases.push_back(answer_case("s" + std::to_string(i), "new" + std::to_string(i)));
    }
    EXPECT_EQ(eval_reliability(m, cases).value(), 1);
}

TEST(Reliability, EmptyAndMixedCategoriesRejected) {
    auto m = small_model();
    try {
        eval_reliability(m, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyCategory);
    }
    std::vector<EvalCase> mixed{answer_case("s0", "a0"), answer_case("s1", "a1", Category::Reverse)};
    EXPECT_THROW(eval_reliability(m, mixed), Error);
}

TEST(Locality, CodebookIsPerfect) {
    auto pre = small_model();
    auto post = pre;
    EditCache cache;
    for (int i = 0; i < 10; ++i) edit(post, cache, T("s" + std::to_string(i), "r", "x"));
    std::vector<EvalCase> cases;
    for (int i = 10; i < 40; ++i) cases.push_back(locality_case("s" + std::to_string(i), "a" + std::to_string(i)));
    EXPECT_EQ(eval_locality(pre, post, cases).value(), 1);
    EXPECT_EQ(eval_locality(pre, pre, cases).value(), 1);
}

TEST(Locality, BothAbsentCountsAsUnchanged) {
    auto pre = small_model();
    std::vector<EvalCase> cases{locality_case("nowhere", "a0")};
    EXPECT_EQ(eval_locality(pre, pre, cases).value(), 1);
}

TEST(Locality, DirectNoiseDecaysAndMatchesRecount) {
    auto pre = small_model(Backend::Direct, 1.0, Rational(1, 5));
    auto post = pre;
    EditCache cache;
    for (int i = 0; i < 30; ++i) edit(post, cache, T("edited" + std::to_string(i), "r", "x"));
    std::vector<EvalCase> cases;
    for (int i = 0; i < 40; ++i) cases.push_back(locality_case("s" + std::to_string(i), "a" + std::to_string(i)));
    const auto r = eval_locality(pre, post, cases);
    EXPECT_LT(r.value(), 1);

    // Recount from the recorded noise: a key flips when its top lost more
    // than the 1/20 margin to the runner-up.
    std::map<QueryKey, std::map<std::string, Rational>> moved;
    for (const auto& e : cache.entries()) {
        for (const auto& n : e.delta.noise) moved[n.key][n.answer] += n.change.weight;
    }
    std::uint64_t same = 0;
    for (int i = 0; i < 40; ++i) {
        QueryKey k{"s" + std::to_string(i), "r"};
        Rational a = 1 + moved[k]["a" + std::to_string(i)];
        Rational b = Rational(19, 20) + moved[k]["b" + std::to_string(i)];
        // ties go to the lexicographically smaller answer, which is "a..."
        if (a > 0 && a >= b) ++same;
    }
    EXPECT_EQ(r.passed, same);
}

TEST(Portability, PerCategory) {
    auto m = small_model();
    std::vector<EvalCase> cases{answer_case("s0", "a0", Category::Reverse), answer_case("s1", "no", Category::Reverse),
                                answer_case("s2", "a2", Category::OneHop), answer_case("s3", "a3", Category::SubReplace)};
    auto p = eval_portability(m, cases);
    EXPECT_EQ(p.reverse, (Ratio{1, 2}));
    EXPECT_EQ(p.one_hop, (Ratio{1, 1}));
    EXPECT_EQ(p.sub_replace, (Ratio{1, 1}));
    cases.pop_back();
    EXPECT_THROW(eval_portability(m, cases), Error);
}

TEST(Decimal, HalfUp) {
    EXPECT_EQ(decimal3(Rational(2, 3)), "0.667");
    EXPECT_EQ(decimal3(Rational(1, 16)), "0.063");
    EXPECT_EQ(decimal3(Rational(1, 2000)), "0.001");
    EXPECT_EQ(decimal3(Rational(1, 2001)), "0.000");
    EXPECT_EQ(decimal3(Rational(1)), "1.000");
    EXPECT_EQ(decimal3(Rational(39, 40)), "0.975");
}

TEST(Report, AverageSkipsEmptyCategories) {
    MetricsReport r;
    r.reliability = Ratio{1, 1};
    r.locality = Ratio{1, 2};
    EXPECT_EQ(r.average(), Rational(3, 4));
    EXPECT_EQ(csv_row("M", r), "M,1.000,0.500,,,,0.750");
    EXPECT_FALSE(MetricsReport{}.average());
}

TEST(Report, EvaluateUsesPreSnapshotForLocality) {
    auto pre = small_model();
    auto post = pre;
    EditCache cache;
    edit(post, cache, T("s0", "r", "x"));
    std::vector<EvalCase> suite{answer_case("s0", "x"), locality_case("s0", "a0"), locality_case("s1", "a1"),
                                answer_case("s0", "nope", Category::OneHop)};
    auto r = evaluate(pre, post, suite);
    EXPECT_EQ(r.reliability, (Ratio{1, 1}));
    EXPECT_EQ(r.locality, (Ratio{1, 2}));
    EXPECT_EQ(r.one_hop, (Ratio{0, 1}));
    EXPECT_FALSE(r.reverse);
    EXPECT_EQ(r.average(), (Rational(1) + Rational(1, 2) + 0) / 3);
    EXPECT_EQ(to_json(r)["locality"]["exact"], "1/2");
}

TEST(EvalCaseJson, RoundTripAndValidation) {
    EvalCase c{{"s", "r"}, "o", Category::OneHop, std::nullopt, T("s", "q", "y")};
    EXPECT_EQ(eval_case_from_json(to_json(c)), c);
    EXPECT_THROW(eval_case_from_json(nlohmann::json{{"s", "a"}, {"r", "b"}, {"category", "Locality"}}), Error);
    EXPECT_THROW(eval_case_from_json(nlohmann::json{{"s", "a"}, {"r", "b"}, {"category", "Nope"}, {"expected", "x"}}), Error);
}

TEST(EvalProperty, ParallelKernelsMatchSerial) {
    std::mt19937_64 rng(8);
    for (int round = 0; round < 20; ++round) {
        auto pre = small_model(Backend::Direct, 0.7, Rational(1, 5));
        auto post = pre;
        EditCache cache;
        for (int i = 0; i < 20; ++i) {
            edit(post, cache, T("s" + std::to_string(rng() % 40), "r", "z" + std::to_string(rng() % 3)));
        }
        std::vector<EvalCase> rel, loc;
        const auto size = 1 + rng() % 200;
        for (std::size_t i = 0; i < size; ++i) {
            const auto s = "s" + std::to_string(rng() % 45);
            rel.push_back(answer_case(s, "z" + std::to_string(rng() % 3)));
            loc.push_back(locality_case(s, "a0"));
        }
        ASSERT_EQ(eval_reliability(post, rel), serial::eval_reliability(post, rel));
        ASSERT_EQ(eval_locality(pre, post, loc), serial::eval_locality(pre, post, loc));
        const auto r = eval_locality(pre, post, loc).value();
        ASSERT_TRUE(r >= 0 && r <= 1);
    }
}
