#include "oneedit/scenario.hpp"

#include <exception>
#include <fstream>

#include "oneedit/interpreter.hpp"
#include "oneedit/kg_io.hpp"

namespace oneedit {

using nlohmann::json;
namespace fs = std::filesystem;

World load_world(const FixtureRefs& refs, const fs::path& base_dir) {
    World w;
    auto schemas = load_schema(base_dir / refs.schema);
    w.kg = load_graph(base_dir / refs.kg, std::move(schemas));
    if (!refs.rules.empty()) {
        w.rules = load_rules(base_dir / refs.rules);
        check_rule_relations(w.rules, w.kg.schemas());
    }
    if (!refs.aliases.empty()) w.aliases = load_aliases(base_dir / refs.aliases);
    if (!refs.model.empty() && fs::exists(base_dir / refs.model)) {
        std::ifstream in(base_dir / refs.model);
        w.base = read_score_table(in);
    } else {
        for (const auto& t : w.kg.triples()) w.base[{t.subject, t.relation}][t.object] = Score{0, 1};
    }
    return w;
}

json to_json(const ScenarioConfig& c) {
    const auto& aug = c.controller.augment;
    return json{{"backend", to_string(c.model.backend)},
                {"controller", c.use_controller},
                {"augmentN", aug.n},
                {"ruleDepth", aug.rule_depth},
                {"rulesEnabled", aug.rules_enabled},
                {"aliasExpansion", c.controller.alias_expansion},
                {"strict", c.controller.strict},
                {"rho", to_string(c.model.residual)},
                {"delta", to_string(c.model.locality_noise)},
                {"noiseRate", c.model.noise_rate},
                {"noiseBatchScale", c.model.noise_batch_scale},
                {"seed", c.model.seed}};
}

ScenarioConfig scenario_config_from_json(const json& j) {
    ScenarioConfig c;
    auto rational = [&](const char* name, Rational fallback) {
        if (!j.contains(name)) return fallback;
        const auto& v = j[name];
        return v.is_string() ? parse_rational(v.get<std::string>()) : parse_rational(v.dump());
    };
    c.model.backend = backend_from_string(j.value("backend", "codebook"));
    c.use_controller = j.value("controller", true);
    c.controller.augment.n = j.value("augmentN", std::size_t{8});
    c.controller.augment.rule_depth = j.value("ruleDepth", std::size_t{2});
    c.controller.augment.rules_enabled = j.value("rulesEnabled", true);
    c.controller.alias_expansion = j.value("aliasExpansion", false);
    c.controller.strict = j.value("strict", false);
    c.model.residual = rational("rho", c.model.residual);
    c.model.locality_noise = rational("delta", c.model.locality_noise);
    c.model.noise_rate = j.value("noiseRate", c.model.noise_rate);
    c.model.noise_batch_scale = j.value("noiseBatchScale", c.model.noise_batch_scale);
    c.model.seed = j.value("seed", std::uint64_t{0});
    return c;
}

json to_json(const ScenarioScript& s) {
    json steps = json::array();
    for (const auto& st : s.steps) {
        json step{{"user", st.user}};
        if (st.utterance) step["utterance"] = *st.utterance;
        if (st.triple) step["triple"] = to_json(*st.triple);
        steps.push_back(step);
    }
    return json{{"name", s.name},
                {"users", s.users},
                {"steps", steps},
                {"config", to_json(s.config)},
                {"fixtureRefs",
                 {{"kg", s.refs.kg},
                  {"schema", s.refs.schema},
                  {"rules", s.refs.rules},
                  {"aliases", s.refs.aliases},
                  {"model", s.refs.model},
                  {"suite", s.refs.suite}}}};
}

ScenarioScript scenario_from_json(const json& j, const fs::path& base_dir) {
    try {
        ScenarioScript s;
        s.name = j.at("name").get<std::string>();
        s.users = j.value("users", std::vector<std::string>{});
        for (const auto& st : j.at("steps")) {
            ScenarioStep step;
            step.user = st.value("user", "anonymous");
            if (st.contains("utterance")) step.utterance = st["utterance"].get<std::string>();
            if (st.contains("triple")) step.triple = triple_from_json(st["triple"]);
            if (step.utterance.has_value() == step.triple.has_value()) {
                throw Error(ErrorCode::Parse, "a step needs exactly one of utterance or triple");
            }
            s.steps.push_back(std::move(step));
        }
        s.config = scenario_config_from_json(j.value("config", json::object()));
        const auto refs = j.value("fixtureRefs", json::object());
        s.refs.kg = refs.value("kg", s.refs.kg);
        s.refs.schema = refs.value("schema", s.refs.schema);
        s.refs.rules = refs.value("rules", s.refs.rules);
        s.refs.aliases = refs.value("aliases", s.refs.aliases);
        s.refs.model = refs.value("model", s.refs.model);
        s.refs.suite = refs.value("suite", s.refs.suite);
        if (j.contains("evalSuite")) {
            s.suite = suite_from_json(j["evalSuite"]);
        } else if (!s.refs.suite.empty()) {
            s.suite = suite_from_json(json::parse(read_file(base_dir / s.refs.suite)));
        }
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("scenario: ") + e.what());
    }
}

ScenarioScript load_scenario(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
    return scenario_from_json(doc, path.parent_path());
}

std::string method_name(const ScenarioConfig& c) {
    std::string name(to_string(c.model.backend));
    if (c.use_controller) name += "+Controller";
    return name;
}

SimulatedModel initial_model(const ScenarioConfig& c, const World& w) {
    return SimulatedModel(c.model, w.base);
}

ScenarioResult run_scenario(const ScenarioScript& script, const World& world) {
    const auto& cfg = script.config;
    Workspace ws{world.kg, initial_model(cfg, world), {}};
    const SimulatedModel pre = ws.model;
    const Controller controller(world.rules, world.aliases, cfg.controller);

    json receipts = json::array();
    for (std::size_t i = 0; i < script.steps.size(); ++i) {
        const auto& step = script.steps[i];
        json rec{{"step", i}, {"user", step.user}};
        try {
            Triple t;
            if (step.triple) {
                t = Triple::make(step.triple->subject, step.triple->relation, step.triple->object);
            } else {
                rec["utterance"] = *step.utterance;
                auto intent = interpret(*step.utterance, ws.kg.schemas());
                if (std::holds_alternative<GenerateIntent>(intent)) {
                    rec["intent"] = "generate";
                    receipts.push_back(std::move(rec));
                    continue;
                }
                t = std::get<EditIntent>(intent).triple;
            }
            rec["intent"] = "edit";
            rec["triple"] = to_json(t);
            const std::uint64_t plan_id = i + 1;
            if (cfg.use_controller) {
                auto plan = controller.plan(ws.kg, ws.model, ws.cache, t);
                auto receipt = apply_plan(ws, plan, {step.user, plan_id});
                rec["plan"] = to_json(plan);
                rec["receipt"] = to_json(receipt);
            } else {
                if (!ws.kg.schemas().contains(t.relation)) throw Error(ErrorCode::UnknownRelation, t.relation);
                auto key = edit(ws.model, ws.cache, t, {step.user, 1, plan_id});
                rec["receipt"] = to_json(AppliedReceipt{{ReceiptItem::Action::Edited, key, t}});
            }
        } catch (const Error& e) {
            throw Error(e.code(), "step " + std::to_string(i) + ": " + e.what());
        }
        receipts.push_back(std::move(rec));
    }

    ScenarioResult result;
    result.report = evaluate(pre, ws.model, script.suite);
    result.receipts = std::move(receipts);
    result.final = std::move(ws);
    return result;
}

json report_json(const ScenarioScript& script, const ScenarioResult& r) {
    return json{{"name", script.name},
                {"method", method_name(script.config)},
                {"config", to_json(script.config)},
                {"steps", script.steps.size()},
                {"metrics", to_json(r.report)},
                {"receipts", r.receipts}};
}

namespace {

void check_budgets(const std::vector<std::size_t>& n_values) {
    if (n_values.empty()) throw Error(ErrorCode::Parse, "sweep needs at least one budget");
    for (std::size_t i = 1; i < n_values.size(); ++i) {
        if (n_values[i] <= n_values[i - 1]) throw Error(ErrorCode::Parse, "sweep budgets must ascend");
    }
}

SweepRow sweep_point(const ScenarioScript& script, const World& world, std::size_t n) {
    ScenarioScript s = script;
    s.config.controller.augment.n = n;
    auto result = run_scenario(s, world);
    if (!result.report.one_hop) throw Error(ErrorCode::EmptyCategory, "OneHop");
    return {n, *result.report.one_hop};
}

}  // namespace

std::vector<SweepRow> sweep_augmentation(const ScenarioScript& script, const World& world,
                                         const std::vector<std::size_t>& n_values) {
    check_budgets(n_values);
    std::vector<SweepRow> rows(n_values.size());
    std::exception_ptr failure;
    const auto count = static_cast<std::int64_t>(n_values.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            rows[static_cast<std::size_t>(i)] = sweep_point(script, world, n_values[static_cast<std::size_t>(i)]);
        } catch (...) {
#pragma omp critical(oneedit_sweep_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return rows;
}

namespace serial {

std::vector<SweepRow> sweep_augmentation(const ScenarioScript& script, const World& world,
                                         const std::vector<std::size_t>& n_values) {
    check_budgets(n_values);
    std::vector<SweepRow> rows;
    for (auto n : n_values) rows.push_back(sweep_point(script, world, n));
    return rows;
}

}  // namespace serial

}  // namespace oneedit
