#include "oneedit/eval.hpp"

#include <array>

#include "oneedit/kg_io.hpp"

namespace oneedit {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Category, std::string_view>, 5> category_names{{
    {Category::Reliability, "Reliability"},
    {Category::Locality, "Locality"},
    {Category::Reverse, "Reverse"},
    {Category::OneHop, "OneHop"},
    {Category::SubReplace, "SubReplace"},
}};

void require_cases(std::span<const EvalCase> cases, Category c) {
    if (cases.empty()) throw Error(ErrorCode::EmptyCategory, std::string(to_string(c)));
    for (const auto& ec : cases) {
        if (ec.category != c) {
            throw Error(ErrorCode::Parse, std::string(to_string(ec.category)) + " case passed to " +
                                              std::string(to_string(c)) + " metric");
        }
    }
}

// Reliability and the portability categories all score "top answer equals
// expected"; a span must hold a single one of them.
void require_answer_cases(std::span<const EvalCase> cases) {
    if (cases.empty()) throw Error(ErrorCode::EmptyCategory, "Reliability");
    if (cases.front().category == Category::Locality) {
        throw Error(ErrorCode::Parse, "Locality case passed to an answer metric");
    }
    require_cases(cases, cases.front().category);
}

bool answers_expected(const SimulatedModel& m, const EvalCase& c) {
    auto a = m.query(c.prompt.subject, c.prompt.relation);
    return a && a->answer == c.expected;
}

bool unchanged(const SimulatedModel& pre, const SimulatedModel& post, const EvalCase& c) {
    auto a = pre.query(c.prompt.subject, c.prompt.relation);
    auto b = post.query(c.prompt.subject, c.prompt.relation);
    if (!a || !b) return !a && !b;
    return a->answer == b->answer;
}

}  // namespace

std::string_view to_string(Category c) {
    for (const auto& [cat, name] : category_names) {
        if (cat == c) return name;
    }
    return "Reliability";
}

Category category_from_string(std::string_view s) {
    for (const auto& [cat, name] : category_names) {
        if (name == s) return cat;
    }
    throw Error(ErrorCode::Parse, "unknown category " + std::string(s));
}

json to_json(const EvalCase& c) {
    json j{{"s", c.prompt.subject}, {"r", c.prompt.relation}, {"category", to_string(c.category)}};
    if (c.category != Category::Locality) j["expected"] = c.expected;
    if (c.pre_edit_expected) j["preEditExpected"] = *c.pre_edit_expected;
    if (c.source) j["source"] = to_json(*c.source);
    return j;
}

EvalCase eval_case_from_json(const json& j) {
    EvalCase c;
    c.prompt = {j.at("s").get<std::string>(), j.at("r").get<std::string>()};
    c.category = category_from_string(j.at("category").get<std::string>());
    c.expected = j.value("expected", "");
    if (j.contains("preEditExpected")) c.pre_edit_expected = j["preEditExpected"].get<std::string>();
    if (j.contains("source")) c.source = triple_from_json(j["source"]);
    if (c.category == Category::Locality && !c.pre_edit_expected) {
        throw Error(ErrorCode::Parse, "locality case without preEditExpected");
    }
    if (c.category != Category::Locality && c.expected.empty()) {
        throw Error(ErrorCode::Parse, "case without expected answer");
    }
    return c;
}

json suite_to_json(const std::vector<EvalCase>& suite) {
    json out = json::array();
    for (const auto& c : suite) out.push_back(to_json(c));
    return out;
}

std::vector<EvalCase> suite_from_json(const json& j) {
    std::vector<EvalCase> out;
    for (const auto& c : j) out.push_back(eval_case_from_json(c));
    return out;
}

Rational Ratio::value() const {
    if (total == 0) return 0;
    Rational q(static_cast<unsigned long>(passed), static_cast<unsigned long>(total));
    q.canonicalize();
    return q;
}

std::string decimal3(const Rational& q) {
    mpz_class scaled = q.get_num() * 1000 * 2 + q.get_den();
    mpz_class den = q.get_den() * 2;
    mpz_class thousandths;
    mpz_fdiv_q(thousandths.get_mpz_t(), scaled.get_mpz_t(), den.get_mpz_t());
    const bool negative = thousandths < 0;
    if (negative) thousandths = -thousandths;
    mpz_class whole = thousandths / 1000;
    mpz_class frac = thousandths % 1000;
    std::string f = frac.get_str();
    f.insert(0, 3 - f.size(), '0');
    return (negative ? "-" : "") + whole.get_str() + "." + f;
}

std::string Ratio::decimal() const { return decimal3(value()); }

Ratio eval_reliability(const SimulatedModel& m, std::span<const EvalCase> cases) {
    require_answer_cases(cases);
    const auto n = static_cast<std::int64_t>(cases.size());
    std::uint64_t passed = 0;
#pragma omp parallel for reduction(+ : passed) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        if (answers_expected(m, cases[static_cast<std::size_t>(i)])) ++passed;
    }
    return {passed, cases.size()};
}

Ratio eval_locality(const SimulatedModel& pre, const SimulatedModel& post,
                    std::span<const EvalCase> cases) {
    require_cases(cases, Category::Locality);
    const auto n = static_cast<std::int64_t>(cases.size());
    std::uint64_t passed = 0;
#pragma omp parallel for reduction(+ : passed) schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        if (unchanged(pre, post, cases[static_cast<std::size_t>(i)])) ++passed;
    }
    return {passed, cases.size()};
}

namespace serial {

Ratio eval_reliability(const SimulatedModel& m, std::span<const EvalCase> cases) {
    require_answer_cases(cases);
    Ratio r{0, cases.size()};
    for (const auto& c : cases) r.passed += answers_expected(m, c) ? 1 : 0;
    return r;
}

Ratio eval_locality(const SimulatedModel& pre, const SimulatedModel& post,
                    std::span<const EvalCase> cases) {
    require_cases(cases, Category::Locality);
    Ratio r{0, cases.size()};
    for (const auto& c : cases) r.passed += unchanged(pre, post, c) ? 1 : 0;
    return r;
}

}  // namespace serial

std::vector<EvalCase> select(std::span<const EvalCase> suite, Category c) {
    std::vector<EvalCase> out;
    for (const auto& ec : suite) {
        if (ec.category == c) out.push_back(ec);
    }
    return out;
}

Portability eval_portability(const SimulatedModel& m, std::span<const EvalCase> cases) {
    for (const auto& c : cases) {
        if (c.category != Category::Reverse && c.category != Category::OneHop &&
            c.category != Category::SubReplace) {
            throw Error(ErrorCode::Parse, std::string(to_string(c.category)) + " case passed to portability");
        }
    }
    return {eval_reliability(m, select(cases, Category::Reverse)),
            eval_reliability(m, select(cases, Category::OneHop)),
            eval_reliability(m, select(cases, Category::SubReplace))};
}

std::optional<Rational> MetricsReport::average() const {
    Rational sum = 0;
    int count = 0;
    for (const auto* r : {&reliability, &locality, &reverse, &one_hop, &sub_replace}) {
        if (*r) {
            sum += (*r)->value();
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    Rational avg = sum / count;
    avg.canonicalize();
    return avg;
}

MetricsReport evaluate(const SimulatedModel& pre, const SimulatedModel& post,
                       std::span<const EvalCase> suite) {
    MetricsReport r;
    auto metric = [&](Category c) -> std::optional<Ratio> {
        auto cases = select(suite, c);
        if (cases.empty()) return std::nullopt;
        return c == Category::Locality ? eval_locality(pre, post, cases) : eval_reliability(post, cases);
    };
    r.reliability = metric(Category::Reliability);
    r.locality = metric(Category::Locality);
    r.reverse = metric(Category::Reverse);
    r.one_hop = metric(Category::OneHop);
    r.sub_replace = metric(Category::SubReplace);
    return r;
}

json to_json(const MetricsReport& r) {
    auto ratio = [](const std::optional<Ratio>& x) -> json {
        if (!x) return nullptr;
        return {{"passed", x->passed}, {"total", x->total}, {"exact", to_string(x->value())},
                {"value", x->decimal()}};
    };
    json avg = nullptr;
    if (auto a = r.average()) avg = {{"exact", to_string(*a)}, {"value", decimal3(*a)}};
    return json{{"reliability", ratio(r.reliability)}, {"locality", ratio(r.locality)},
                {"reverse", ratio(r.reverse)},         {"oneHop", ratio(r.one_hop)},
                {"subReplace", ratio(r.sub_replace)},  {"average", avg}};
}

std::string csv_row(std::string_view method, const MetricsReport& r) {
    std::string row(method);
    for (const auto* x : {&r.reliability, &r.locality, &r.reverse, &r.one_hop, &r.sub_replace}) {
        row += ',';
        if (*x) row += (*x)->decimal();
    }
    row += ',';
    if (auto a = r.average()) row += decimal3(*a);
    return row;
}

}  // namespace oneedit
