#pragma once

// Symbolic knowledge graph: canonical triples, relation schemas with
// inverses, functional-relation enforcement and BFS neighborhoods.

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oneedit/error.hpp"

namespace oneedit {

// Strips surrounding whitespace and collapses internal runs to one space.
std::string canonicalize(std::string_view text);

struct Triple {
    std::string subject;
    std::string relation;
    std::string object;

    // Canonicalizes every field; throws MalformedTriple when one is empty.
    static Triple make(std::string_view s, std::string_view r, std::string_view o);

    std::string to_string() const;

    auto operator<=>(const Triple&) const = default;
    bool operator==(const Triple&) const = default;
};

struct RelationSchema {
    std::string name;
    bool reversible = false;
    std::optional<std::string> inverse;
    bool functional = true;

    bool symmetric() const { return inverse && *inverse == name; }
    bool operator==(const RelationSchema&) const = default;
};

class SchemaRegistry {
public:
    // Validates reversible <=> inverse and the involution against any
    // already-registered inverse. Re-adding an identical schema is a no-op.
    void add(RelationSchema schema);

    // Registers a mirror schema for every declared inverse that has none.
    void complete_inverses();

    const RelationSchema* find(std::string_view name) const;
    bool contains(std::string_view name) const { return find(name) != nullptr; }
    std::optional<std::string> inverse_of(std::string_view name) const;
    bool is_functional(std::string_view name) const;

    const std::map<std::string, RelationSchema, std::less<>>& all() const { return schemas_; }
    std::size_t size() const { return schemas_.size(); }

    bool operator==(const SchemaRegistry&) const = default;

private:
    std::map<std::string, RelationSchema, std::less<>> schemas_;
};

// (o, r_r, s) for a reversible relation, nullopt otherwise.
std::optional<Triple> reverse_twin(const SchemaRegistry& schemas, const Triple& t);

struct UpsertOutcome {
    enum class Kind { Inserted, ReplacedExisting, AlreadyPresent };
    Kind kind = Kind::Inserted;
    std::optional<std::string> replaced;

    bool operator==(const UpsertOutcome&) const = default;
};

struct LayeredTriple {
    Triple triple;
    std::size_t layer = 0;  // 1 = incident to the start node
};

class KnowledgeGraph {
public:
    using SubjectRelation = std::pair<std::string, std::string>;

    KnowledgeGraph() = default;
    explicit KnowledgeGraph(SchemaRegistry schemas) : schemas_(std::move(schemas)) {}

    const SchemaRegistry& schemas() const { return schemas_; }

    UpsertOutcome upsert(const Triple& t);
    bool erase(const Triple& t);
    bool contains(const Triple& t) const { return triples_.contains(t); }

    std::set<std::string> lookup(std::string_view subject, std::string_view relation) const;
    std::vector<Triple> with_relation(std::string_view relation) const;
    std::vector<Triple> incident(std::string_view entity) const;

    const std::set<Triple>& triples() const { return triples_; }
    std::size_t size() const { return triples_.size(); }

    // Breadth-first over edges in either direction; lexicographic within a
    // layer; at most n triples.
    std::vector<Triple> neighborhood(std::string_view subject, std::size_t n) const;
    std::vector<LayeredTriple> neighborhood_layers(std::string_view subject, std::size_t n) const;

    bool index_consistent() const;

    bool operator==(const KnowledgeGraph& other) const {
        return triples_ == other.triples_ && schemas_ == other.schemas_;
    }

private:
    void index_insert(const Triple& t);
    void index_erase(const Triple& t);

    SchemaRegistry schemas_;
    std::set<Triple> triples_;
    std::map<SubjectRelation, std::set<std::string>> by_key_;
    std::map<std::string, std::set<Triple>, std::less<>> by_relation_;
    std::map<std::string, std::set<Triple>, std::less<>> incident_;
};

}  // namespace oneedit
