#include "oneedit/kg.hpp"

#include <algorithm>
#include <cctype>

namespace oneedit {

std::string canonicalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

Triple Triple::make(std::string_view s, std::string_view r, std::string_view o) {
    Triple t{canonicalize(s), canonicalize(r), canonicalize(o)};
    if (t.subject.empty() || t.relation.empty() || t.object.empty()) {
        throw Error(ErrorCode::MalformedTriple,
                    "empty field in (" + std::string(s) + ", " + std::string(r) + ", " +
                        std::string(o) + ")");
    }
    return t;
}

std::string Triple::to_string() const {
    return "(" + subject + ", " + relation + ", " + object + ")";
}

// --- schemas ---------------------------------------------------------------

void SchemaRegistry::add(RelationSchema schema) {
    schema.name = canonicalize(schema.name);
    if (schema.name.empty()) {
        throw Error(ErrorCode::InvalidSchema, "relation with empty name");
    }
    if (schema.inverse) {
        schema.inverse = canonicalize(*schema.inverse);
        if (schema.inverse->empty()) schema.inverse.reset();
    }
    if (schema.reversible != schema.inverse.has_value()) {
        throw Error(ErrorCode::InvalidSchema,
                    schema.name + ": reversible must be set exactly when an inverse is declared");
    }
    if (auto it = schemas_.find(schema.name); it != schemas_.end()) {
        if (it->second == schema) return;
        throw Error(ErrorCode::InvalidSchema, "conflicting redefinition of " + schema.name);
    }
    if (schema.inverse && *schema.inverse != schema.name) {
        if (const auto* inv = find(*schema.inverse)) {
            if (inv->inverse != schema.name) {
                throw Error(ErrorCode::InvalidSchema,
                            schema.name + " declares inverse " + inv->name +
                                " which does not declare it back");
            }
        }
    }
    // A schema already naming this relation as its inverse must be answered.
    for (const auto& [name, other] : schemas_) {
        if (other.inverse == schema.name && name != schema.name && schema.inverse != name) {
            throw Error(ErrorCode::InvalidSchema,
                        name + " declares inverse " + schema.name + " which does not declare it back");
        }
    }
    schemas_.emplace(schema.name, std::move(schema));
}

void SchemaRegistry::complete_inverses() {
    std::vector<RelationSchema> missing;
    for (const auto& [name, schema] : schemas_) {
        if (schema.inverse && !schemas_.contains(*schema.inverse)) {
            missing.push_back(RelationSchema{*schema.inverse, true, name, schema.functional});
        }
    }
    for (auto& m : missing) add(std::move(m));
}

const RelationSchema* SchemaRegistry::find(std::string_view name) const {
    auto it = schemas_.find(name);
    return it == schemas_.end() ? nullptr : &it->second;
}

std::optional<std::string> SchemaRegistry::inverse_of(std::string_view name) const {
    const auto* s = find(name);
    return s ? s->inverse : std::nullopt;
}

bool SchemaRegistry::is_functional(std::string_view name) const {
    const auto* s = find(name);
    return s && s->functional;
}

std::optional<Triple> reverse_twin(const SchemaRegistry& schemas, const Triple& t) {
    auto inv = schemas.inverse_of(t.relation);
    if (!inv) return std::nullopt;
    return Triple{t.object, *inv, t.subject};
}

// --- graph -----------------------------------------------------------------

void KnowledgeGraph::index_insert(const Triple& t) {
    by_key_[{t.subject, t.relation}].insert(t.object);
    by_relation_[t.relation].insert(t);
    incident_[t.subject].insert(t);
    incident_[t.object].insert(t);
}

void KnowledgeGraph::index_erase(const Triple& t) {
    auto erase_from = [&t](auto& map, const auto& key) {
        auto it = map.find(key);
        if (it == map.end()) return;
        it->second.erase(t);
        if (it->second.empty()) map.erase(it);
    };
    if (auto it = by_key_.find({t.subject, t.relation}); it != by_key_.end()) {
        it->second.erase(t.object);
        if (it->second.empty()) by_key_.erase(it);
    }
    erase_from(by_relation_, t.relation);
    erase_from(incident_, t.subject);
    erase_from(incident_, t.object);
}

UpsertOutcome KnowledgeGraph::upsert(const Triple& raw) {
    const Triple t = Triple::make(raw.subject, raw.relation, raw.object);
    const auto* schema = schemas_.find(t.relation);
    if (!schema) throw Error(ErrorCode::UnknownRelation, t.relation);

    if (triples_.contains(t)) return {UpsertOutcome::Kind::AlreadyPresent, std::nullopt};

    UpsertOutcome outcome;
    if (schema->functional) {
        auto it = by_key_.find({t.subject, t.relation});
        if (it != by_key_.end() && !it->second.empty()) {
            // Functional: at most one object is ever indexed here.
            const std::string old = *it->second.begin();
            const Triple prior{t.subject, t.relation, old};
            triples_.erase(prior);
            index_erase(prior);
            outcome = {UpsertOutcome::Kind::ReplacedExisting, old};
        }
    }
    triples_.insert(t);
    index_insert(t);
    return outcome;
}

bool KnowledgeGraph::erase(const Triple& t) {
    if (triples_.erase(t) == 0) return false;
    index_erase(t);
    return true;
}

std::set<std::string> KnowledgeGraph::lookup(std::string_view subject,
                                             std::string_view relation) const {
    auto it = by_key_.find({std::string(subject), std::string(relation)});
    return it == by_key_.end() ? std::set<std::string>{} : it->second;
}

std::vector<Triple> KnowledgeGraph::with_relation(std::string_view relation) const {
    auto it = by_relation_.find(relation);
    if (it == by_relation_.end()) return {};
    return {it->second.begin(), it->second.end()};
}

std::vector<Triple> KnowledgeGraph::incident(std::string_view entity) const {
    auto it = incident_.find(entity);
    if (it == incident_.end()) return {};
    return {it->second.begin(), it->second.end()};
}

std::vector<LayeredTriple> KnowledgeGraph::neighborhood_layers(std::string_view subject,
                                                               std::size_t n) const {
    std::vector<LayeredTriple> out;
    if (n == 0 || !incident_.contains(subject)) return out;

    std::set<std::string, std::less<>> visited{std::string(subject)};
    std::set<Triple> collected;
    std::vector<std::string> frontier{std::string(subject)};

    for (std::size_t layer = 1; !frontier.empty() && out.size() < n; ++layer) {
        std::set<Triple> layer_triples;
        for (const auto& node : frontier) {
            auto it = incident_.find(node);
            if (it == incident_.end()) continue;
            for (const auto& t : it->second) {
                if (!collected.contains(t)) layer_triples.insert(t);
            }
        }
        std::vector<std::string> next;
        for (const auto& t : layer_triples) {
            if (out.size() < n) out.push_back({t, layer});
            collected.insert(t);
            for (const auto* end : {&t.subject, &t.object}) {
                if (visited.insert(*end).second) next.push_back(*end);
            }
        }
        frontier = std::move(next);
    }
    return out;
}

std::vector<Triple> KnowledgeGraph::neighborhood(std::string_view subject, std::size_t n) const {
    std::vector<Triple> out;
    for (auto& lt : neighborhood_layers(subject, n)) out.push_back(std::move(lt.triple));
    return out;
}

bool KnowledgeGraph::index_consistent() const {
    KnowledgeGraph rebuilt(schemas_);
    for (const auto& t : triples_) {
        rebuilt.triples_.insert(t);
        rebuilt.index_insert(t);
    }
    return rebuilt.by_key_ == by_key_ && rebuilt.by_relation_ == by_relation_ &&
           rebuilt.incident_ == incident_;
}

}  // namespace oneedit
