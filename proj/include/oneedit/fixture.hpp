#pragma once

// Seeded synthetic fixtures: a knowledge graph with reversible relations,
// composition rules, aliases and a base model, plus multi-user edit scripts
// and the eval suites that go with them.
//
// Each planted edit i owns ten entities:
//   s, y_old, y1..y3, w, z_old, z1..z3
// and seeds (s, r, y_old) with its twin, a reverse conflict (y1, r_inv, w),
// bridges (y, B, z) for every candidate object, the stale rule head
// (s, H, z_old), and 0-5 background links from s to hub entities. Entities
// left over after the edits hang off the hubs as filler.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oneedit/scenario.hpp"

namespace oneedit {

struct FixtureSizes {
    std::size_t entities = 2000;
    std::size_t relations = 4;   // edited relations
    std::size_t reversible = 2;  // first `reversible` edited relations get inverses
    std::size_t rules = 4;       // rule k composes relation k with its own bridge
    std::size_t edits = 0;       // 0: as many as fit, at most default_edits
    std::size_t locality = 200;
    std::size_t hubs = 6;
    bool one_hop = true;

    static constexpr std::size_t max_relations = 8;
    static constexpr std::size_t max_reversible = 4;
    static constexpr std::size_t max_users = 3;
    static constexpr std::size_t entities_per_edit = 10;
    static constexpr std::size_t default_edits = 40;
};

struct PlantedEdit {
    Triple original;                  // (s, r, y_old)
    std::vector<std::string> objects;  // y1..y3
    std::optional<std::string> inverse;
    std::optional<std::string> head;     // rule head relation, if a rule covers r
    std::vector<std::string> hop_objects;  // z1..z3
    std::string alias;
};

struct Fixture {
    std::uint64_t seed = 0;
    FixtureSizes sizes;
    World world;
    std::vector<PlantedEdit> edits;
    std::vector<EvalCase> locality;
};

// Throws InfeasibleFixture when the sizes cannot be satisfied.
Fixture generate_fixture(std::uint64_t seed, const FixtureSizes& sizes = {});

// Codebook backend, controller on with alias expansion, n = 8.
ScenarioConfig standard_config(std::uint64_t seed);

// Eval suite for the script in which `users` users edit every fact in turn.
std::vector<EvalCase> fixture_suite(const Fixture& f, std::size_t users);

// Round-robin script: user 1 edits every fact, then user 2, and so on. The
// script for k users is a prefix of the one for k + 1.
ScenarioScript fixture_script(const Fixture& f, std::size_t users, const ScenarioConfig& config);

// Checks the fixture's promises about its own cases; throws InfeasibleFixture.
void validate_fixture(const Fixture& f);

// kg.jsonl, schema.json, rules.txt, aliases.json, model.jsonl,
// suite_usersK.json and usersK.json for K = 1..3, fixture.json.
void write_fixture(const Fixture& f, const std::filesystem::path& dir);

}  // namespace oneedit
