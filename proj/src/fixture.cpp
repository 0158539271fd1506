#include "oneedit/fixture.hpp"

#include <array>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "oneedit/interpreter.hpp"
#include "oneedit/kg_io.hpp"

namespace oneedit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<const char*, const char*>, FixtureSizes::max_reversible> reversible_pool{{
    {"Wife", "Husband"}, {"Mentor", "Protege"}, {"Owner", "Asset"}, {"Patron", "Client"}}};
constexpr std::array<const char*, FixtureSizes::max_relations> plain_pool{
    "Employer", "Coach", "Birthplace", "Agent", "Publisher", "Captain", "Label", "Sponsor"};
constexpr std::array<const char*, FixtureSizes::max_relations> bridge_pool{
    "Hometown", "Country", "Club", "Region", "Language", "League", "Studio", "Party"};
constexpr const char* link_relation = "Link";

// Fixed-width draws so fixtures are identical on every standard library.
class Draws {
public:
    explicit Draws(std::uint64_t seed) : rng_(seed) {}
    std::uint64_t below(std::uint64_t n) { return rng_() % n; }

private:
    std::mt19937_64 rng_;
};

std::string entity_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "Q%04zu", i + 1);
    return buf;
}

Rational fact_weight(Draws& d) {
    static const std::array<Rational, 3> weights{Rational(1), Rational(3, 2), Rational(9, 5)};
    return weights[d.below(weights.size())];
}

Rational runner_up_weight(Draws& d) {
    static const std::array<Rational, 4> weights{Rational(19, 20), Rational(9, 10), Rational(4, 5),
                                                 Rational(1, 2)};
    return weights[d.below(weights.size())];
}

[[noreturn]] void infeasible(const std::string& why) { throw Error(ErrorCode::InfeasibleFixture, why); }

struct RelationPlan {
    std::string name;
    std::optional<std::string> inverse;
    std::optional<std::string> bridge;
    std::optional<std::string> head;
};

std::vector<RelationPlan> plan_relations(const FixtureSizes& sz) {
    if (sz.relations == 0 || sz.relations > FixtureSizes::max_relations) {
        infeasible("relations must be in 1.." + std::to_string(FixtureSizes::max_relations));
    }
    if (sz.reversible > std::min(sz.relations, FixtureSizes::max_reversible)) {
        infeasible("too many reversible relations");
    }
    if (sz.relations - sz.reversible > plain_pool.size()) infeasible("too many plain relations");
    if (sz.rules > sz.relations) infeasible("at most one rule per edited relation");
    if (sz.one_hop && sz.rules == 0) infeasible("one-hop cases need at least one rule");

    std::vector<RelationPlan> out;
    for (std::size_t k = 0; k < sz.relations; ++k) {
        RelationPlan p;
        if (k < sz.reversible) {
            p.name = reversible_pool[k].first;
            p.inverse = reversible_pool[k].second;
        } else {
            p.name = plain_pool[k - sz.reversible];
        }
        if (k < sz.rules) {
            p.bridge = bridge_pool[k];
            p.head = p.name + *p.bridge;
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::string utterance_for(const Triple& t, std::size_t style) {
    switch (style % 4) {
        case 0: return "Change the " + t.relation + " of " + t.subject + " to " + t.object;
        case 1: return "Set " + t.subject + " " + t.relation + " to " + t.object + ".";
        case 2: return "Edit: " + t.subject + "'s " + t.relation + " is " + t.object;
        default: return render_dsl(t);
    }
}

}  // namespace

Fixture generate_fixture(std::uint64_t seed, const FixtureSizes& sizes) {
    const auto relations = plan_relations(sizes);
    if (sizes.hubs < 5) infeasible("need at least 5 hub entities");
    if (sizes.entities < sizes.hubs + FixtureSizes::entities_per_edit) {
        infeasible("not enough entities for a single edit");
    }
    const std::size_t room = (sizes.entities - sizes.hubs) / FixtureSizes::entities_per_edit;
    const std::size_t edit_count = sizes.edits == 0 ? std::min(room, FixtureSizes::default_edits) : sizes.edits;
    if (edit_count > room) infeasible("not enough entities for " + std::to_string(edit_count) + " edits");

    Fixture f;
    f.seed = seed;
    f.sizes = sizes;
    Draws d(seed);

    SchemaRegistry schemas;
    for (const auto& rp : relations) {
        schemas.add({rp.name, rp.inverse.has_value(), rp.inverse, true});
        if (rp.bridge) {
            schemas.add({*rp.bridge, false, std::nullopt, true});
            schemas.add({*rp.head, false, std::nullopt, true});
        }
    }
    schemas.add({link_relation, false, std::nullopt, false});
    schemas.complete_inverses();

    for (const auto& rp : relations) {
        if (!rp.bridge) continue;
        f.world.rules.push_back(
            parse_rule(rp.name + "(X,Y) & " + *rp.bridge + "(Y,Z) -> " + *rp.head + "(X,Z)"));
    }

    KnowledgeGraph kg(schemas);
    ScoreTable base;
    auto seed_fact = [&](const Triple& t) {
        kg.upsert(t);
        base[{t.subject, t.relation}][t.object] = Score{0, fact_weight(d)};
        if (auto twin = reverse_twin(schemas, t)) {
            kg.upsert(*twin);
            base[{twin->subject, twin->relation}][twin->object] = Score{0, fact_weight(d)};
        }
    };

    std::vector<std::string> hubs;
    for (std::size_t h = 0; h < sizes.hubs; ++h) hubs.push_back(entity_name(h));

    std::size_t next_entity = sizes.hubs;
    for (std::size_t i = 0; i < edit_count; ++i) {
        const auto& rp = relations[i % relations.size()];
        std::array<std::string, FixtureSizes::entities_per_edit> e;
        for (auto& name : e) name = entity_name(next_entity++);
        const auto& [s, y_old, y1, y2, y3, w, z_old, z1, z2, z3] = e;

        PlantedEdit pe;
        pe.original = Triple{s, rp.name, y_old};
        pe.objects = {y1, y2, y3};
        pe.inverse = rp.inverse;
        pe.head = rp.head;
        pe.alias = s + "_alias";

        seed_fact(pe.original);
        if (rp.inverse) seed_fact(Triple{y1, *rp.inverse, w});
        if (rp.bridge) {
            pe.hop_objects = {z1, z2, z3};
            seed_fact(Triple{y_old, *rp.bridge, z_old});
            for (std::size_t u = 0; u < 3; ++u) seed_fact(Triple{pe.objects[u], *rp.bridge, pe.hop_objects[u]});
            seed_fact(Triple{s, *rp.head, z_old});
        }
        const std::size_t degree = d.below(6);
        std::set<std::size_t> picked;
        while (picked.size() < degree) picked.insert(d.below(hubs.size()));
        for (auto h : picked) seed_fact(Triple{s, link_relation, hubs[h]});

        f.world.aliases[s] = {pe.alias};
        base[{pe.alias, rp.name}][y_old] = base[{s, rp.name}][y_old];
        f.edits.push_back(std::move(pe));
    }

    for (std::size_t j = 0; next_entity < sizes.entities; ++j) {
        seed_fact(Triple{hubs[j % hubs.size()], link_relation, entity_name(next_entity++)});
    }

    // Out-of-scope prompts on relations only the model knows, each with a
    // close runner-up so collateral noise can flip it.
    const std::size_t entity_count = next_entity;
    for (std::size_t k = 0; k < sizes.locality; ++k) {
        QueryKey key{entity_name(k % entity_count), "Trivia" + std::to_string(k / entity_count)};
        const std::size_t top_index = d.below(entity_count);
        const auto top = entity_name(top_index);
        const auto runner = entity_name((top_index + 1 + d.below(entity_count - 1)) % entity_count);
        base[key][top] = Score{0, 1};
        base[key][runner] = Score{0, runner_up_weight(d)};
        f.locality.push_back({key, "", Category::Locality, top, std::nullopt});
    }

    f.world.kg = std::move(kg);
    f.world.base = std::move(base);
    return f;
}

ScenarioConfig standard_config(std::uint64_t seed) {
    ScenarioConfig c;
    c.model.backend = Backend::Codebook;
    c.model.seed = seed;
    c.use_controller = true;
    c.controller.augment = {8, 2, true};
    c.controller.alias_expansion = true;
    return c;
}

std::vector<EvalCase> fixture_suite(const Fixture& f, std::size_t users) {
    if (users == 0 || users > FixtureSizes::max_users) infeasible("users must be in 1..3");
    std::vector<EvalCase> suite;
    for (const auto& pe : f.edits) {
        const auto& s = pe.original.subject;
        const auto& r = pe.original.relation;
        const auto& y = pe.objects[users - 1];
        const Triple edit{s, r, y};
        suite.push_back({{s, r}, y, Category::Reliability, std::nullopt, edit});
        if (pe.inverse) suite.push_back({{y, *pe.inverse}, s, Category::Reverse, std::nullopt, edit});
        if (pe.head && f.sizes.one_hop) {
            suite.push_back({{s, *pe.head}, pe.hop_objects[users - 1], Category::OneHop, std::nullopt, edit});
        }
        suite.push_back({{pe.alias, r}, y, Category::SubReplace, std::nullopt, edit});
    }
    suite.insert(suite.end(), f.locality.begin(), f.locality.end());
    return suite;
}

ScenarioScript fixture_script(const Fixture& f, std::size_t users, const ScenarioConfig& config) {
    ScenarioScript script;
    script.name = "users" + std::to_string(users);
    script.config = config;
    script.suite = fixture_suite(f, users);
    script.refs.suite = "suite_users" + std::to_string(users) + ".json";
    for (std::size_t u = 0; u < users; ++u) script.users.push_back("u" + std::to_string(u + 1));
    for (std::size_t u = 0; u < users; ++u) {
        for (std::size_t i = 0; i < f.edits.size(); ++i) {
            const auto& pe = f.edits[i];
            const Triple t{pe.original.subject, pe.original.relation, pe.objects[u]};
            script.steps.push_back({script.users[u], utterance_for(t, i + u), std::nullopt});
        }
    }
    return script;
}

void validate_fixture(const Fixture& f) {
    const auto& kg = f.world.kg;
    const auto& schemas = kg.schemas();
    if (!kg.index_consistent()) infeasible("graph indexes disagree");
    for (const auto& t : kg.triples()) {
        if (!schemas.contains(t.relation)) infeasible("unregistered relation " + t.relation);
    }
    try {
        check_rule_relations(f.world.rules, schemas);
    } catch (const Error& e) {
        infeasible(e.what());
    }

    for (std::size_t users = 1; users <= FixtureSizes::max_users; ++users) {
        for (const auto& step : fixture_script(f, users, standard_config(f.seed)).steps) {
            if (std::holds_alternative<GenerateIntent>(interpret(*step.utterance, schemas))) {
                infeasible("script utterance does not parse: " + *step.utterance);
            }
        }
        for (const auto& c : fixture_suite(f, users)) {
            const auto where = std::string(to_string(c.category)) + " case (" + c.prompt.subject + ", " +
                               c.prompt.relation + ")";
            if (c.category == Category::Locality) {
                auto it = f.world.base.find(c.prompt);
                auto top = it == f.world.base.end() ? std::nullopt : top_answer(it->second);
                if (!top || top->answer != c.pre_edit_expected) infeasible(where + " disagrees with the base model");
                if (schemas.contains(c.prompt.relation)) infeasible(where + " uses a graph relation");
                continue;
            }
            if (!c.source) infeasible(where + " has no source edit");
            const auto& src = *c.source;
            switch (c.category) {
                case Category::Reliability:
                    if (c.prompt != QueryKey{src.subject, src.relation} || c.expected != src.object) {
                        infeasible(where + " does not restate its edit");
                    }
                    break;
                case Category::Reverse: {
                    auto inv = schemas.inverse_of(src.relation);
                    if (!inv || c.prompt != QueryKey{src.object, *inv} || c.expected != src.subject) {
                        infeasible(where + " is not the inverse of its edit");
                    }
                    break;
                }
                case Category::SubReplace: {
                    auto it = f.world.aliases.find(src.subject);
                    const bool aliased = it != f.world.aliases.end() &&
                                         std::find(it->second.begin(), it->second.end(), c.prompt.subject) !=
                                             it->second.end();
                    if (!aliased || c.prompt.relation != src.relation || c.expected != src.object) {
                        infeasible(where + " is not covered by the alias table");
                    }
                    break;
                }
                case Category::OneHop: {
                    KnowledgeGraph after = kg;
                    after.upsert(src);
                    if (auto twin = reverse_twin(schemas, src)) after.upsert(*twin);
                    const Triple target{c.prompt.subject, c.prompt.relation, c.expected};
                    std::size_t deriving = 0;
                    for (const auto& rule : f.world.rules) {
                        auto closure = rule_closure(after, {rule}, {src}, 1);
                        if (closure.as_set().contains(target)) ++deriving;
                    }
                    if (deriving != 1) {
                        infeasible(where + " is derived by " + std::to_string(deriving) + " rules");
                    }
                    break;
                }
                case Category::Locality:
                    break;
            }
        }
    }
}

void write_fixture(const Fixture& f, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ostringstream out;
        write_triples(out, {f.world.kg.triples().begin(), f.world.kg.triples().end()});
        write_file_atomic(dir / "kg.jsonl", out.str());
    }
    write_file_atomic(dir / "schema.json", schema_to_json(f.world.kg.schemas()).dump(2) + "\n");
    write_file_atomic(dir / "rules.txt", render_rules(f.world.rules));
    write_file_atomic(dir / "aliases.json", json(f.world.aliases).dump(2) + "\n");
    {
        std::ostringstream out;
        write_score_table(out, f.world.base);
        write_file_atomic(dir / "model.jsonl", out.str());
    }
    for (std::size_t users = 1; users <= FixtureSizes::max_users; ++users) {
        auto script = fixture_script(f, users, standard_config(f.seed));
        write_file_atomic(dir / script.refs.suite, suite_to_json(script.suite).dump(1) + "\n");
        write_file_atomic(dir / ("users" + std::to_string(users) + ".json"), to_json(script).dump(2) + "\n");
    }
    const auto& sz = f.sizes;
    json manifest{{"seed", f.seed},
                  {"entities", sz.entities},
                  {"relations", sz.relations},
                  {"reversible", sz.reversible},
                  {"rules", sz.rules},
                  {"edits", f.edits.size()},
                  {"locality", sz.locality},
                  {"hubs", sz.hubs},
                  {"oneHop", sz.one_hop}};
    write_file_atomic(dir / "fixture.json", manifest.dump(2) + "\n");
}

}  // namespace oneedit
