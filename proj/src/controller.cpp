#include "oneedit/controller.hpp"

#include <algorithm>
#include <set>

namespace oneedit {

using nlohmann::json;

std::vector<EditKey> EditPlan::rollback_keys() const {
    std::vector<EditKey> keys;
    for (const auto& r : rollbacks) {
        if (r.key) keys.push_back(*r.key);
    }
    return keys;
}

std::string_view to_string(ConflictKind k) {
    switch (k) {
        case ConflictKind::None: return "None";
        case ConflictKind::Coverage: return "Coverage";
        case ConflictKind::Reverse: return "Reverse";
        case ConflictKind::Both: return "Both";
    }
    return "None";
}

std::string_view to_string(ReceiptItem::Action a) {
    switch (a) {
        case ReceiptItem::Action::RolledBack: return "rolled_back";
        case ReceiptItem::Action::GraphRemoved: return "graph_removed";
        case ReceiptItem::Action::Edited: return "edited";
        case ReceiptItem::Action::GraphAdded: return "graph_added";
    }
    return "edited";
}

namespace {

ReceiptItem::Action action_from_string(std::string_view s) {
    for (auto a : {ReceiptItem::Action::RolledBack, ReceiptItem::Action::GraphRemoved,
                   ReceiptItem::Action::Edited, ReceiptItem::Action::GraphAdded}) {
        if (to_string(a) == s) return a;
    }
    throw Error(ErrorCode::Parse, "unknown receipt action " + std::string(s));
}

}  // namespace

std::optional<Triple> detect_coverage_conflict(const KnowledgeGraph& g, const Triple& t) {
    const auto* schema = g.schemas().find(t.relation);
    if (!schema) throw Error(ErrorCode::UnknownRelation, t.relation);
    if (!schema->functional) throw Error(ErrorCode::NonFunctionalRelation, t.relation);
    if (g.contains(t)) return std::nullopt;
    for (const auto& o : g.lookup(t.subject, t.relation)) {
        if (o != t.object) return Triple{t.subject, t.relation, o};
    }
    return std::nullopt;
}

std::optional<Triple> detect_reverse_conflict(const KnowledgeGraph& g, const Triple& t) {
    const auto* schema = g.schemas().find(t.relation);
    if (!schema || !schema->inverse) return std::nullopt;
    const auto& inverse = *schema->inverse;
    if (!g.schemas().is_functional(inverse)) return std::nullopt;
    for (const auto& s : g.lookup(t.object, inverse)) {
        if (s != t.subject) return Triple{t.object, inverse, s};
    }
    return std::nullopt;
}

ConflictReport classify_conflict(const KnowledgeGraph& g, const Triple& t) {
    ConflictReport report;
    report.incoming = t;
    if (g.schemas().is_functional(t.relation)) report.existing_forward = detect_coverage_conflict(g, t);
    report.existing_reverse = detect_reverse_conflict(g, t);
    if (report.existing_forward && report.existing_reverse) report.kind = ConflictKind::Both;
    else if (report.existing_forward) report.kind = ConflictKind::Coverage;
    else if (report.existing_reverse) report.kind = ConflictKind::Reverse;
    return report;
}

namespace {

using Slot = std::pair<std::string, std::string>;

// Removes conflicting occupants of functional slots from a hypothetical
// graph, dragging each occupant's reverse twin along.
class SlotClearer {
public:
    explicit SlotClearer(KnowledgeGraph& hyp) : hyp_(hyp) {}

    void clear_for(const Triple& incoming) {
        const auto& schemas = hyp_.schemas();
        if (!schemas.is_functional(incoming.relation)) return;
        for (const auto& o : hyp_.lookup(incoming.subject, incoming.relation)) {
            if (o != incoming.object) remove({incoming.subject, incoming.relation, o});
        }
    }

    const std::vector<Triple>& removed() const { return removed_; }

private:
    void remove(const Triple& c) {
        if (!hyp_.erase(c)) return;
        removed_.push_back(c);
        if (auto twin = reverse_twin(hyp_.schemas(), c); twin && hyp_.erase(*twin)) {
            removed_.push_back(*twin);
        }
    }

    KnowledgeGraph& hyp_;
    std::vector<Triple> removed_;
};

}  // namespace

EditPlan Controller::plan(const KnowledgeGraph& g, const SimulatedModel& /*m*/,
                          const EditCache& cache, const Triple& raw) const {
    const Triple t = Triple::make(raw.subject, raw.relation, raw.object);
    const auto& schemas = g.schemas();
    if (!schemas.contains(t.relation)) throw Error(ErrorCode::UnknownRelation, t.relation);

    EditPlan plan;
    plan.request = t;
    if (g.contains(t)) {
        plan.already_present = true;
        return plan;
    }

    // Primary edit, its inverse twin, then alias restatements.
    plan.edits.push_back(t);
    auto add_edit = [&](const Triple& x) {
        if (!g.contains(x) && std::find(plan.edits.begin(), plan.edits.end(), x) == plan.edits.end()) {
            plan.edits.push_back(x);
        }
    };
    if (auto twin = reverse_twin(schemas, t)) add_edit(*twin);
    if (config_.alias_expansion) {
        if (auto it = aliases_.find(t.subject); it != aliases_.end()) {
            for (const auto& alias : it->second) {
                if (alias != t.subject) add_edit(Triple{alias, t.relation, t.object});
            }
        }
    }

    KnowledgeGraph hyp = g;
    SlotClearer clearer(hyp);
    for (const auto& e : plan.edits) clearer.clear_for(e);
    for (const auto& e : plan.edits) hyp.upsert(e);

    const auto& aug = config_.augment;
    if (aug.n > 0) {
        const std::set<Triple> edit_set(plan.edits.begin(), plan.edits.end());
        std::set<Slot> slots;
        for (const auto& e : plan.edits) {
            if (schemas.is_functional(e.relation)) slots.insert({e.subject, e.relation});
        }
        auto already_in_model = [&](const Triple& x) { return cache.active_key_for(x).has_value(); };

        std::vector<Triple> derived;
        if (aug.rules_enabled && aug.rule_depth > 0 && !rules_.empty()) {
            for (auto& d : rule_closure(hyp, rules_, plan.edits, aug.rule_depth).triples) {
                if (edit_set.contains(d) || already_in_model(d)) continue;
                if (schemas.is_functional(d.relation) && !slots.insert({d.subject, d.relation}).second) {
                    continue;
                }
                derived.push_back(std::move(d));
            }
        }

        // Widen the horizon until n usable neighbors survive the filters or
        // the component is exhausted.
        std::vector<Triple> near, far;
        for (std::size_t horizon = 2 * aug.n + plan.edits.size();; horizon *= 2) {
            near.clear();
            far.clear();
            auto layers = hyp.neighborhood_layers(t.subject, horizon);
            for (auto& lt : layers) {
                const auto& x = lt.triple;
                if (edit_set.contains(x) || already_in_model(x)) continue;
                if (schemas.is_functional(x.relation) && slots.contains({x.subject, x.relation})) continue;
                (lt.layer <= 1 ? near : far).push_back(std::move(lt.triple));
            }
            if (near.size() + far.size() >= aug.n || layers.size() < horizon) break;
        }

        std::vector<Triple> ordered = std::move(near);
        const std::size_t first_derived = ordered.size();
        ordered.insert(ordered.end(), derived.begin(), derived.end());
        const std::size_t end_derived = ordered.size();
        ordered.insert(ordered.end(), far.begin(), far.end());
        if (ordered.size() > aug.n) ordered.resize(aug.n);

        for (std::size_t i = first_derived; i < std::min(end_derived, ordered.size()); ++i) {
            clearer.clear_for(ordered[i]);
        }
        plan.augmentations = std::move(ordered);
    }

    for (const auto& c : clearer.removed()) {
        auto key = cache.active_key_for(c);
        if (!key && config_.strict) {
            throw Error(ErrorCode::UnresolvableRollback,
                        c.to_string() + " is in the graph but no active edit encodes it");
        }
        plan.rollbacks.push_back({c, key});
    }
    return plan;
}

AppliedReceipt apply_plan(Workspace& ws, const EditPlan& plan, const ApplyOptions& opts) {
    Workspace next = ws;
    AppliedReceipt receipt;
    for (const auto& rb : plan.rollbacks) {
        if (rb.key) {
            rollback(next.model, next.cache, *rb.key);
            next.kg.erase(rb.triple);
            receipt.push_back({ReceiptItem::Action::RolledBack, rb.key, rb.triple});
        } else if (next.kg.erase(rb.triple)) {
            receipt.push_back({ReceiptItem::Action::GraphRemoved, std::nullopt, rb.triple});
        }
    }
    const std::size_t batch = plan.edits.size() + plan.augmentations.size();
    const EditOptions edit_opts{opts.user, batch, opts.plan_id};
    for (const auto* list : {&plan.edits, &plan.augmentations}) {
        for (const auto& x : *list) {
            next.kg.upsert(x);
            auto key = edit(next.model, next.cache, x, edit_opts);
            receipt.push_back({ReceiptItem::Action::Edited, key, x});
        }
    }
    ws = std::move(next);
    return receipt;
}

void replay_receipt(Workspace& ws, const AppliedReceipt& receipt, const ApplyOptions& opts,
                    std::size_t batch_size) {
    const EditOptions edit_opts{opts.user, batch_size, opts.plan_id};
    for (const auto& item : receipt) {
        switch (item.action) {
            case ReceiptItem::Action::RolledBack:
                rollback(ws.model, ws.cache, *item.key);
                ws.kg.erase(item.triple);
                break;
            case ReceiptItem::Action::GraphRemoved:
                ws.kg.erase(item.triple);
                break;
            case ReceiptItem::Action::GraphAdded:
                ws.kg.upsert(item.triple);
                break;
            case ReceiptItem::Action::Edited: {
                ws.kg.upsert(item.triple);
                auto key = edit(ws.model, ws.cache, item.triple, edit_opts);
                if (item.key && key != *item.key) {
                    throw Error(ErrorCode::Scenario, "receipt replay diverged at " + item.key->str());
                }
                break;
            }
        }
    }
}

json to_json(const EditPlan& plan) {
    json rollbacks = json::array();
    for (const auto& r : plan.rollbacks) {
        rollbacks.push_back({{"triple", to_json(r.triple)}, {"key", r.key ? json(r.key->str()) : json(nullptr)}});
    }
    auto list = [](const std::vector<Triple>& ts) {
        json out = json::array();
        for (const auto& t : ts) out.push_back(to_json(t));
        return out;
    };
    return json{{"request", to_json(plan.request)},
                {"alreadyPresent", plan.already_present},
                {"rollbacks", rollbacks},
                {"edits", list(plan.edits)},
                {"augmentations", list(plan.augmentations)}};
}

json to_json(const ConflictReport& report) {
    auto opt = [](const std::optional<Triple>& t) { return t ? to_json(*t) : json(nullptr); };
    return json{{"kind", to_string(report.kind)},
                {"existingForward", opt(report.existing_forward)},
                {"existingReverse", opt(report.existing_reverse)},
                {"incoming", to_json(report.incoming)}};
}

json to_json(const AppliedReceipt& receipt) {
    json out = json::array();
    for (const auto& item : receipt) {
        out.push_back({{"action", to_string(item.action)},
                       {"key", item.key ? json(item.key->str()) : json(nullptr)},
                       {"triple", to_json(item.triple)}});
    }
    return out;
}

AppliedReceipt receipt_from_json(const json& j) {
    AppliedReceipt out;
    for (const auto& item : j) {
        std::optional<EditKey> key;
        if (!item.at("key").is_null()) {
            key = EditKey::parse(item["key"].get<std::string>());
            if (!key) throw Error(ErrorCode::Parse, "bad key in receipt");
        }
        out.push_back({action_from_string(item.at("action").get<std::string>()), key,
                       triple_from_json(item.at("triple"))});
    }
    return out;
}

}  // namespace oneedit
