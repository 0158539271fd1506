// oneedit: REPL, HTTP service, scenario evaluation, augmentation sweep and
// fixture generation.

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "oneedit/fixture.hpp"
#include "oneedit/kg_io.hpp"
#include "oneedit/service.hpp"

using namespace oneedit;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int exit_usage = 1;
constexpr int exit_config = 2;
constexpr int exit_assertion = 3;

struct GlobalFlags {
    std::string kg, schema, rules, aliases, model;
    std::string backend;
    std::optional<std::size_t> augment_n;
    std::optional<std::size_t> rule_depth;
    std::string rho, delta;
    std::optional<double> noise_rate;
    std::optional<std::uint64_t> seed;
    bool strict = false;
    bool no_rules = false;
    bool no_controller = false;
    bool no_alias_expansion = false;
};

void add_global_flags(CLI::App& app, GlobalFlags& g) {
    app.add_option("--kg", g.kg, "knowledge graph file (JSON lines of {s,r,o})");
    app.add_option("--schema", g.schema, "relation schema file");
    app.add_option("--rules", g.rules, "logical rule file");
    app.add_option("--aliases", g.aliases, "alias table file");
    app.add_option("--model", g.model, "base model score file; defaults to the graph at weight 1");
    app.add_option("--backend", g.backend, "editing backend")->check(CLI::IsMember({"direct", "codebook"}));
    app.add_option("--augment-n", g.augment_n, "augmentation triples per edit (default 8)");
    app.add_option("--rule-depth", g.rule_depth, "forward-chaining rounds (default 2)");
    app.add_option("--rho", g.rho, "residual fraction of a superseded answer, direct backend");
    app.add_option("--delta", g.delta, "collateral perturbation size, direct backend");
    app.add_option("--noise-rate", g.noise_rate, "collateral perturbation probability per edit");
    app.add_option("--seed", g.seed, "model RNG seed");
    app.add_flag("--strict", g.strict, "reject plans that remove graph facts no edit encodes");
    app.add_flag("--no-rules", g.no_rules, "disable rule-based augmentation");
    app.add_flag("--no-controller", g.no_controller, "send edits straight to the editor");
    app.add_flag("--no-alias-expansion", g.no_alias_expansion, "do not restate edits on alias subjects");
}

// Flags given on the command line win over the scenario's own config.
ScenarioConfig apply_flags(ScenarioConfig c, const GlobalFlags& g) {
    if (!g.backend.empty()) c.model.backend = backend_from_string(g.backend);
    if (g.augment_n) c.controller.augment.n = *g.augment_n;
    if (g.rule_depth) c.controller.augment.rule_depth = *g.rule_depth;
    if (!g.rho.empty()) c.model.residual = parse_rational(g.rho);
    if (!g.delta.empty()) c.model.locality_noise = parse_rational(g.delta);
    if (g.noise_rate) c.model.noise_rate = *g.noise_rate;
    if (g.seed) c.model.seed = *g.seed;
    if (g.strict) c.controller.strict = true;
    if (g.no_rules) c.controller.augment.rules_enabled = false;
    if (g.no_controller) c.use_controller = false;
    if (g.no_alias_expansion) c.controller.alias_expansion = false;
    return c;
}

FixtureRefs refs_from_flags(FixtureRefs refs, const GlobalFlags& g) {
    if (!g.kg.empty()) refs.kg = fs::absolute(g.kg);
    if (!g.schema.empty()) refs.schema = fs::absolute(g.schema);
    if (!g.rules.empty()) refs.rules = fs::absolute(g.rules);
    if (!g.aliases.empty()) refs.aliases = fs::absolute(g.aliases);
    if (!g.model.empty()) refs.model = fs::absolute(g.model);
    return refs;
}

World world_from_flags(const GlobalFlags& g) {
    if (g.kg.empty() || g.schema.empty()) throw Error(ErrorCode::Parse, "--kg and --schema are required");
    FixtureRefs refs;
    refs.kg = g.kg;
    refs.schema = g.schema;
    refs.rules = g.rules;
    refs.aliases = g.aliases;
    refs.model = g.model;
    return load_world(refs, ".");
}

SessionConfig session_config(const GlobalFlags& g, const World& w) {
    ScenarioConfig c;
    c.controller.alias_expansion = !w.aliases.empty();
    c = apply_flags(c, g);
    return {c.model, c.controller, c.use_controller};
}

// --- repl ------------------------------------------------------------------

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

std::pair<std::string, std::string> split_bar(const std::string& text) {
    auto bar = text.find('|');
    if (bar == std::string::npos) throw ServiceError(400, {{"error", "expected <subject> | <relation>"}});
    return {canonicalize(text.substr(0, bar)), canonicalize(text.substr(bar + 1))};
}

int run_repl(const GlobalFlags& g) {
    auto world = world_from_flags(g);
    const auto config = session_config(g, world);
    KnowledgeService service(std::move(world), config, {});
    std::string user = "u1";
    std::cout << "oneedit repl; :help for commands" << std::endl;
    std::string line;
    while (std::cout << user << "> " << std::flush, std::getline(std::cin, line)) {
        line = canonicalize(line);
        if (line.empty()) continue;
        try {
            if (line == ":quit" || line == ":q") break;
            if (line == ":help") {
                std::cout << "  <utterance>            edit or question\n"
                             "  :query <s> | <r>       model answer with provenance\n"
                             "  :rollback <key>        undo one edit\n"
                             "  :history [user]        audit log\n"
                             "  :graph <s> [n]         neighborhood\n"
                             "  :user <name>           switch user\n"
                             "  :quit\n";
            } else if (line.rfind(":user ", 0) == 0) {
                user = canonicalize(line.substr(6));
            } else if (line.rfind(":query ", 0) == 0) {
                auto [s, r] = split_bar(line.substr(7));
                print(service.handle_query({{"subject", s}, {"relation", r}}));
            } else if (line.rfind(":rollback ", 0) == 0) {
                print(service.handle_rollback(user, canonicalize(line.substr(10))));
            } else if (line.rfind(":history", 0) == 0) {
                HistoryFilter f;
                if (line.size() > 9) f.user = canonicalize(line.substr(9));
                print(service.handle_history(f));
            } else if (line.rfind(":graph ", 0) == 0) {
                std::istringstream in(line.substr(7));
                std::string s;
                std::size_t n = 8;
                in >> s >> n;
                print(service.handle_neighborhood(s, n));
            } else {
                print(service.handle_edit(user, {{"text", line}}));
            }
        } catch (const ServiceError& e) {
            std::cout << "error " << e.status() << ": " << e.what() << std::endl;
        }
    }
    return 0;
}

// --- serve -----------------------------------------------------------------

HttpServer* active_server = nullptr;

int run_serve(const GlobalFlags& g, const std::string& host, int port, const std::string& data_dir,
              std::size_t queue) {
    ServiceOptions options;
    options.queue_capacity = queue;
    std::unique_ptr<KnowledgeService> service;
    if (!data_dir.empty() && fs::exists(fs::path(data_dir) / "audit.jsonl")) {
        service = KnowledgeService::open(data_dir, options);
        std::cerr << "restored " << service->snapshot()->last_request_id() << " requests from " << data_dir << "\n";
    } else {
        if (!data_dir.empty()) options.data_dir = data_dir;
        auto world = world_from_flags(g);
        const auto config = session_config(g, world);
        service = std::make_unique<KnowledgeService>(std::move(world), config, options);
    }
    HttpServer server(*service);
    active_server = &server;
    std::signal(SIGINT, [](int) { if (active_server) active_server->stop(); });
    std::signal(SIGTERM, [](int) { if (active_server) active_server->stop(); });
    std::cerr << "listening on " << host << ":" << port << "\n";
    const bool ok = server.listen(host, port);
    active_server = nullptr;
    if (!ok) {
        std::cerr << "oneedit: server stopped or could not bind " << host << ":" << port << "\n";
    }
    return 0;
}

// --- eval / sweep ----------------------------------------------------------

struct Loaded {
    ScenarioScript script;
    World world;
};

Loaded load(const std::string& path, const GlobalFlags& g) {
    auto script = load_scenario(path);
    script.refs = refs_from_flags(script.refs, g);
    auto world = load_world(script.refs, fs::path(path).parent_path());
    script.config = apply_flags(script.config, g);
    return {std::move(script), std::move(world)};
}

// "expect": {"oneHop": {"min": "9/10"}, "locality": {"equals": "1"}}
std::vector<std::string> check_expectations(const json& expect, const MetricsReport& r) {
    std::vector<std::string> failures;
    const std::map<std::string, const std::optional<Ratio>*> metrics{
        {"reliability", &r.reliability}, {"locality", &r.locality}, {"reverse", &r.reverse},
        {"oneHop", &r.one_hop},          {"subReplace", &r.sub_replace}};
    for (const auto& [name, bounds] : expect.items()) {
        auto it = metrics.find(name);
        if (it == metrics.end()) throw Error(ErrorCode::Parse, "unknown metric in expect: " + name);
        if (!*it->second) {
            failures.push_back(name + " has no cases");
            continue;
        }
        const Rational v = (*it->second)->value();
        auto bound = [&](const char* key) { return parse_rational(bounds.at(key).get<std::string>()); };
        if (bounds.contains("min") && v < bound("min")) failures.push_back(name + " below " + bounds["min"].get<std::string>());
        if (bounds.contains("max") && v > bound("max")) failures.push_back(name + " above " + bounds["max"].get<std::string>());
        if (bounds.contains("equals") && v != bound("equals")) failures.push_back(name + " is not " + bounds["equals"].get<std::string>());
    }
    return failures;
}

int run_eval(const std::string& path, const GlobalFlags& g, const std::string& report_path,
             const std::string& csv_path) {
    auto [script, world] = load(path, g);
    auto result = run_scenario(script, world);
    const auto doc = report_json(script, result);
    const auto row = csv_row(method_name(script.config), result.report);
    if (!report_path.empty()) write_file_atomic(report_path, doc.dump(2) + "\n");
    if (!csv_path.empty()) write_file_atomic(csv_path, std::string(csv_header) + "\n" + row + "\n");
    std::cout << csv_header << "\n" << row << "\n";

    const json raw = json::parse(read_file(path));
    if (raw.contains("expect")) {
        auto failures = check_expectations(raw["expect"], result.report);
        for (const auto& f : failures) std::cerr << "assertion failed: " << f << "\n";
        if (!failures.empty()) return exit_assertion;
    }
    return 0;
}

int run_sweep(const std::string& path, const GlobalFlags& g, const std::vector<std::size_t>& ns) {
    auto [script, world] = load(path, g);
    std::cout << "n,One-Hop,passed,total\n";
    for (const auto& row : sweep_augmentation(script, world, ns)) {
        std::cout << row.n << "," << row.one_hop.decimal() << "," << row.one_hop.passed << ","
                  << row.one_hop.total << "\n";
    }
    return 0;
}

int run_fixture(std::uint64_t seed, const std::string& out, const FixtureSizes& sizes) {
    auto fixture = generate_fixture(seed, sizes);
    validate_fixture(fixture);
    write_fixture(fixture, out);
    std::cout << "wrote fixture seed " << seed << " with " << fixture.edits.size() << " edits and "
              << fixture.world.kg.size() << " triples to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"oneedit: knowledge editing over a symbolic graph and a simulated model"};
    app.require_subcommand(1);
    GlobalFlags g;
    add_global_flags(app, g);

    auto* repl = app.add_subcommand("repl", "interactive edit / query loop");

    auto* serve = app.add_subcommand("serve", "HTTP service");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir;
    std::size_t queue = 64;
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "port");
    serve->add_option("--data-dir", data_dir, "persist audit log and state here; restarts resume from it");
    serve->add_option("--queue", queue, "writer queue capacity");

    auto* eval = app.add_subcommand("eval", "run a scenario script and report metrics");
    std::string scenario, report_path, csv_path;
    eval->add_option("--scenario", scenario, "scenario JSON")->required();
    eval->add_option("--report", report_path, "write the JSON report here");
    eval->add_option("--csv", csv_path, "write the CSV table here");

    auto* sweep = app.add_subcommand("sweep", "one-hop accuracy across augmentation budgets");
    std::string budgets = "0,2,4,8,16,32";
    std::string sweep_scenario;
    sweep->add_option("--n", budgets, "comma-separated ascending budgets");
    sweep->add_option("--scenario", sweep_scenario, "scenario JSON")->required();

    auto* fixture = app.add_subcommand("fixture", "generate a synthetic fixture");
    std::uint64_t fixture_seed = 7;
    std::string out;
    FixtureSizes sizes;
    fixture->add_option("--seed", fixture_seed, "fixture seed");
    fixture->add_option("--out", out, "output directory")->required();
    fixture->add_option("--entities", sizes.entities, "entity count");
    fixture->add_option("--relations", sizes.relations, "edited relations");
    fixture->add_option("--reversible", sizes.reversible, "reversible edited relations");
    fixture->add_option("--fixture-rules", sizes.rules, "composition rules");
    fixture->add_option("--edits", sizes.edits, "planted edits (0: automatic)");
    fixture->add_option("--locality", sizes.locality, "out-of-scope cases");
    fixture->add_flag("!--no-one-hop", sizes.one_hop, "omit one-hop cases");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_usage;
    }

    try {
        if (*repl) return run_repl(g);
        if (*serve) return run_serve(g, host, port, data_dir, queue);
        if (*eval) return run_eval(scenario, g, report_path, csv_path);
        if (*sweep) {
            std::vector<std::size_t> ns;
            std::stringstream in(budgets);
            for (std::string item; std::getline(in, item, ',');) {
                try {
                    ns.push_back(std::stoul(item));
                } catch (const std::exception&) {
                    std::cerr << "oneedit: bad budget list " << budgets << "\n";
                    return exit_usage;
                }
            }
            if (ns.empty() || !std::is_sorted(ns.begin(), ns.end()) ||
                std::adjacent_find(ns.begin(), ns.end()) != ns.end()) {
                std::cerr << "oneedit: budgets must be distinct and ascending: " << budgets << "\n";
                return exit_usage;
            }
            return run_sweep(sweep_scenario, g, ns);
        }
        if (*fixture) return run_fixture(fixture_seed, out, sizes);
    } catch (const ServiceError& e) {
        std::cerr << "oneedit: " << e.what() << "\n";
        return exit_config;
    } catch (const Error& e) {
        std::cerr << "oneedit: " << e.what() << "\n";
        return e.code() == ErrorCode::Scenario ? exit_assertion : exit_config;
    } catch (const std::exception& e) {
        std::cerr << "oneedit: " << e.what() << "\n";
        return exit_config;
    }
    return exit_usage;
}
