#pragma once

// Scenario scripts: a sequence of user edit steps replayed through
// interpreter, controller and editor, then scored against an eval suite.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oneedit/controller.hpp"
#include "oneedit/eval.hpp"

namespace oneedit {

// Everything a scenario reads from fixture files.
struct World {
    KnowledgeGraph kg;
    std::vector<LogicalRule> rules;
    AliasTable aliases;
    ScoreTable base;
};

struct FixtureRefs {
    std::string kg = "kg.jsonl";
    std::string schema = "schema.json";
    std::string rules = "rules.txt";
    std::string aliases = "aliases.json";
    std::string model = "model.jsonl";
    std::string suite;
};

// Paths are resolved against base_dir.
World load_world(const FixtureRefs& refs, const std::filesystem::path& base_dir);

struct ScenarioStep {
    std::string user;
    std::optional<std::string> utterance;
    std::optional<Triple> triple;
};

struct ScenarioConfig {
    ModelConfig model;
    ControllerConfig controller;
    bool use_controller = true;  // false: each edit goes straight to the editor
};

struct ScenarioScript {
    std::string name;
    std::vector<std::string> users;
    std::vector<ScenarioStep> steps;
    std::vector<EvalCase> suite;
    ScenarioConfig config;
    FixtureRefs refs;
};

nlohmann::json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScenarioScript& s);
// The suite is loaded from refs.suite (relative to base_dir) unless the
// document carries an inline "evalSuite".
ScenarioScript scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ScenarioScript load_scenario(const std::filesystem::path& path);

// "Codebook+Controller", "Direct" and so on.
std::string method_name(const ScenarioConfig& c);

struct ScenarioResult {
    MetricsReport report;
    nlohmann::json receipts;  // one record per step
    Workspace final;
};

SimulatedModel initial_model(const ScenarioConfig& c, const World& w);

ScenarioResult run_scenario(const ScenarioScript& script, const World& world);

// Report document for one run: metrics, method and the per-step receipts.
nlohmann::json report_json(const ScenarioScript& script, const ScenarioResult& r);

struct SweepRow {
    std::size_t n = 0;
    Ratio one_hop;
    bool operator==(const SweepRow&) const = default;
};

// One scenario run per budget; runs are independent and execute in parallel.
std::vector<SweepRow> sweep_augmentation(const ScenarioScript& script, const World& world,
                                         const std::vector<std::size_t>& n_values);

namespace serial {
std::vector<SweepRow> sweep_augmentation(const ScenarioScript& script, const World& world,
                                         const std::vector<std::size_t>& n_values);
}

}  // namespace oneedit
