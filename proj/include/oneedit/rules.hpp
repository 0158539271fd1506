#pragma once

// Horn-style logical rules over triples and a semi-naive forward chainer.
//
// Grammar, one rule per line:
//     Rel1(X,Y) & Rel2(Y,Z) -> Rel3(X,Z)
// Single uppercase letters are variables, any other term is a constant.
// Lines starting with '#' and blank lines are ignored.

#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "oneedit/kg.hpp"

namespace oneedit {

struct Term {
    bool variable = false;
    std::string text;

    bool operator==(const Term&) const = default;
};

struct Atom {
    Term subject;
    std::string relation;
    Term object;

    bool operator==(const Atom&) const = default;
};

struct LogicalRule {
    std::vector<Atom> body;  // 1 or 2 atoms
    Atom head;

    std::string to_string() const;
    bool operator==(const LogicalRule&) const = default;
};

LogicalRule parse_rule(std::string_view line);
std::vector<LogicalRule> parse_rules(std::string_view text);
std::string render_rules(const std::vector<LogicalRule>& rules);

// Throws RuleRelationUnknown when a rule names an unregistered relation.
void check_rule_relations(const std::vector<LogicalRule>& rules, const SchemaRegistry& schemas);

struct Derivation {
    std::size_t rule = 0;
    std::vector<Triple> premises;
    std::size_t round = 0;
};

struct ClosureResult {
    // Ordered by derivation round, then lexicographically.
    std::vector<Triple> triples;
    std::map<Triple, Derivation> derivations;

    std::set<Triple> as_set() const { return {triples.begin(), triples.end()}; }
};

inline constexpr std::size_t unbounded_depth = std::numeric_limits<std::size_t>::max();

// Every derivation uses at least one seed or previously derived triple; the
// other body atom is matched against g, the seeds and what has been derived
// so far. Triples already in g or among the seeds are not reported.
ClosureResult rule_closure(const KnowledgeGraph& g,
                           const std::vector<LogicalRule>& rules,
                           const std::vector<Triple>& seeds,
                           std::size_t max_depth);

}  // namespace oneedit
