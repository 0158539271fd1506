#pragma once

// Turns one incoming edit triple into rollback / edit / augmentation sets
// against the knowledge graph, and applies such a plan to graph, model and
// cache as a single transaction.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oneedit/editor.hpp"
#include "oneedit/kg.hpp"
#include "oneedit/kg_io.hpp"
#include "oneedit/rules.hpp"

namespace oneedit {

struct AugmentConfig {
    std::size_t n = 8;          // augmentation triple budget
    std::size_t rule_depth = 2;  // forward-chaining rounds
    bool rules_enabled = true;
};

struct ControllerConfig {
    AugmentConfig augment;
    bool alias_expansion = false;
    // Reject plans that must remove a graph triple no active edit encodes.
    bool strict = false;
};

struct RollbackItem {
    Triple triple;
    std::optional<EditKey> key;  // absent for knowledge that never went through the editor

    bool operator==(const RollbackItem&) const = default;
};

struct EditPlan {
    Triple request;
    bool already_present = false;
    std::vector<RollbackItem> rollbacks;
    std::vector<Triple> edits;
    std::vector<Triple> augmentations;

    bool empty() const { return rollbacks.empty() && edits.empty() && augmentations.empty(); }
    std::vector<EditKey> rollback_keys() const;
    bool operator==(const EditPlan&) const = default;
};

enum class ConflictKind { None, Coverage, Reverse, Both };
std::string_view to_string(ConflictKind k);

struct ConflictReport {
    ConflictKind kind = ConflictKind::None;
    std::optional<Triple> existing_forward;
    std::optional<Triple> existing_reverse;
    Triple incoming;
};

// (s, r, o') with o' != o. Throws NonFunctionalRelation for multi-valued r.
std::optional<Triple> detect_coverage_conflict(const KnowledgeGraph& g, const Triple& t);

// The stored (o, r_r, s') contradicting the inverse of t, if any.
std::optional<Triple> detect_reverse_conflict(const KnowledgeGraph& g, const Triple& t);

ConflictReport classify_conflict(const KnowledgeGraph& g, const Triple& t);

// Graph, model and cache that a plan mutates together.
struct Workspace {
    KnowledgeGraph kg;
    SimulatedModel model;
    EditCache cache;

    bool operator==(const Workspace&) const = default;
};

struct ReceiptItem {
    enum class Action { RolledBack, GraphRemoved, Edited, GraphAdded };
    Action action = Action::Edited;
    std::optional<EditKey> key;
    Triple triple;

    bool operator==(const ReceiptItem&) const = default;
};

std::string_view to_string(ReceiptItem::Action a);

using AppliedReceipt = std::vector<ReceiptItem>;

class Controller {
public:
    Controller() = default;
    Controller(std::vector<LogicalRule> rules, AliasTable aliases, ControllerConfig config)
        : rules_(std::move(rules)), aliases_(std::move(aliases)), config_(config) {}

    const ControllerConfig& config() const { return config_; }
    ControllerConfig& config() { return config_; }
    const std::vector<LogicalRule>& rules() const { return rules_; }
    const AliasTable& aliases() const { return aliases_; }

    EditPlan plan(const KnowledgeGraph& g, const SimulatedModel& m, const EditCache& cache,
                  const Triple& t) const;

private:
    std::vector<LogicalRule> rules_;
    AliasTable aliases_;
    ControllerConfig config_;
};

struct ApplyOptions {
    std::string user = "anonymous";
    std::uint64_t plan_id = 0;
};

// Rollbacks, then edits, then augmentations. Strong guarantee: on any error
// `ws` is left untouched.
AppliedReceipt apply_plan(Workspace& ws, const EditPlan& plan, const ApplyOptions& opts = {});

// Re-executes a receipt against a copy of the pre-plan workspace.
void replay_receipt(Workspace& ws, const AppliedReceipt& receipt, const ApplyOptions& opts,
                    std::size_t batch_size);

nlohmann::json to_json(const EditPlan& plan);
nlohmann::json to_json(const ConflictReport& report);
nlohmann::json to_json(const AppliedReceipt& receipt);
AppliedReceipt receipt_from_json(const nlohmann::json& j);

}  // namespace oneedit
