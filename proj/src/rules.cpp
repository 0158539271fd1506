#include "oneedit/rules.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <sstream>

namespace oneedit {
namespace {

using Bindings = std::map<std::string, std::string>;

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

Term parse_term(std::string_view raw, std::string_view line) {
    auto text = canonicalize(raw);
    if (text.empty()) throw Error(ErrorCode::RuleParse, "empty term in: " + std::string(line));
    bool variable = text.size() == 1 && std::isupper(static_cast<unsigned char>(text[0]));
    return Term{variable, std::move(text)};
}

Atom parse_atom(std::string_view raw, std::string_view line) {
    auto s = trim(raw);
    auto open = s.find('(');
    if (open == std::string_view::npos || s.back() != ')') {
        throw Error(ErrorCode::RuleParse, "expected Rel(A,B) in: " + std::string(line));
    }
    auto relation = canonicalize(s.substr(0, open));
    auto args = s.substr(open + 1, s.size() - open - 2);
    auto comma = args.find(',');
    if (relation.empty() || comma == std::string_view::npos ||
        args.find(',', comma + 1) != std::string_view::npos) {
        throw Error(ErrorCode::RuleParse, "expected two arguments in: " + std::string(line));
    }
    return Atom{parse_term(args.substr(0, comma), line), std::move(relation),
                parse_term(args.substr(comma + 1), line)};
}

void collect_vars(const Atom& a, std::set<std::string>& out) {
    if (a.subject.variable) out.insert(a.subject.text);
    if (a.object.variable) out.insert(a.object.text);
}

std::string render_term(const Term& t) { return t.text; }

std::string render_atom(const Atom& a) {
    return a.relation + "(" + render_term(a.subject) + "," + render_term(a.object) + ")";
}

bool bind(const Term& term, const std::string& value, Bindings& b) {
    if (!term.variable) return term.text == value;
    auto [it, inserted] = b.emplace(term.text, value);
    return inserted || it->second == value;
}

std::optional<Bindings> unify(const Atom& atom, const Triple& t, Bindings b) {
    if (atom.relation != t.relation) return std::nullopt;
    if (!bind(atom.subject, t.subject, b) || !bind(atom.object, t.object, b)) return std::nullopt;
    return b;
}

std::optional<std::string> resolve(const Term& term, const Bindings& b) {
    if (!term.variable) return term.text;
    auto it = b.find(term.text);
    if (it == b.end()) return std::nullopt;
    return it->second;
}

// Facts visible to the chainer: the graph plus seeds and derived triples.
class FactView {
public:
    explicit FactView(const KnowledgeGraph& g) : g_(g) {}

    void add(const Triple& t) { extra_.insert(t); }
    bool contains(const Triple& t) const { return g_.contains(t) || extra_.contains(t); }

    std::vector<Triple> candidates(const Atom& atom, const Bindings& b) const {
        std::vector<Triple> out;
        auto s = resolve(atom.subject, b);
        auto o = resolve(atom.object, b);
        if (s) {
            for (const auto& obj : g_.lookup(*s, atom.relation)) out.push_back({*s, atom.relation, obj});
        } else if (o) {
            for (auto& t : g_.incident(*o)) {
                if (t.relation == atom.relation && t.object == *o) out.push_back(std::move(t));
            }
        } else {
            out = g_.with_relation(atom.relation);
        }
        for (const auto& t : extra_) {
            if (t.relation != atom.relation || g_.contains(t)) continue;
            if (s && t.subject != *s) continue;
            if (o && t.object != *o) continue;
            out.push_back(t);
        }
        return out;
    }

private:
    const KnowledgeGraph& g_;
    std::set<Triple> extra_;
};

Triple instantiate(const Atom& head, const Bindings& b) {
    return Triple{*resolve(head.subject, b), head.relation, *resolve(head.object, b)};
}

}  // namespace

std::string LogicalRule::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (i) out += " & ";
        out += render_atom(body[i]);
    }
    return out + " -> " + render_atom(head);
}

LogicalRule parse_rule(std::string_view line) {
    auto arrow = line.find("->");
    if (arrow == std::string_view::npos) {
        throw Error(ErrorCode::RuleParse, "missing '->' in: " + std::string(line));
    }
    LogicalRule rule;
    auto body = line.substr(0, arrow);
    std::size_t start = 0;
    while (true) {
        auto amp = body.find('&', start);
        rule.body.push_back(parse_atom(body.substr(start, amp - start), line));
        if (amp == std::string_view::npos) break;
        start = amp + 1;
    }
    rule.head = parse_atom(line.substr(arrow + 2), line);

    if (rule.body.empty() || rule.body.size() > 2) {
        throw Error(ErrorCode::RuleParse, "rule bodies hold one or two atoms: " + std::string(line));
    }
    std::set<std::string> body_vars;
    for (const auto& a : rule.body) collect_vars(a, body_vars);
    std::set<std::string> head_vars;
    collect_vars(rule.head, head_vars);
    for (const auto& v : head_vars) {
        if (!body_vars.contains(v)) {
            throw Error(ErrorCode::RuleParse, "head variable " + v + " unbound in: " + std::string(line));
        }
    }
    if (rule.body.size() == 2) {
        std::set<std::string> first, second;
        collect_vars(rule.body[0], first);
        collect_vars(rule.body[1], second);
        bool connected = std::any_of(first.begin(), first.end(),
                                     [&](const auto& v) { return second.contains(v); });
        if (!connected) {
            throw Error(ErrorCode::RuleParse, "body atoms share no variable: " + std::string(line));
        }
    }
    return rule;
}

std::vector<LogicalRule> parse_rules(std::string_view text) {
    std::vector<LogicalRule> rules;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        rules.push_back(parse_rule(t));
    }
    return rules;
}

std::string render_rules(const std::vector<LogicalRule>& rules) {
    std::string out;
    for (const auto& r : rules) out += r.to_string() + "\n";
    return out;
}

void check_rule_relations(const std::vector<LogicalRule>& rules, const SchemaRegistry& schemas) {
    for (const auto& rule : rules) {
        auto check = [&](const Atom& a) {
            if (!schemas.contains(a.relation)) {
                throw Error(ErrorCode::RuleRelationUnknown, a.relation + " in " + rule.to_string());
            }
        };
        for (const auto& a : rule.body) check(a);
        check(rule.head);
    }
}

ClosureResult rule_closure(const KnowledgeGraph& g,
                           const std::vector<LogicalRule>& rules,
                           const std::vector<Triple>& seeds,
                           std::size_t max_depth) {
    check_rule_relations(rules, g.schemas());
    for (const auto& s : seeds) {
        if (!g.schemas().contains(s.relation)) throw Error(ErrorCode::UnknownRelation, s.relation);
    }

    ClosureResult result;
    FactView facts(g);
    std::set<Triple> seed_set(seeds.begin(), seeds.end());
    for (const auto& s : seed_set) facts.add(s);
    std::set<Triple> delta = seed_set;

    for (std::size_t round = 1; round <= max_depth && !delta.empty(); ++round) {
        std::map<Triple, Derivation> fresh;
        auto emit = [&](const Triple& head, std::size_t rule, std::vector<Triple> premises) {
            if (facts.contains(head) || fresh.contains(head)) return;
            fresh.emplace(head, Derivation{rule, std::move(premises), round});
        };
        for (std::size_t ri = 0; ri < rules.size(); ++ri) {
            const auto& rule = rules[ri];
            for (std::size_t pos = 0; pos < rule.body.size(); ++pos) {
                for (const auto& d : delta) {
                    auto b = unify(rule.body[pos], d, {});
                    if (!b) continue;
                    if (rule.body.size() == 1) {
                        emit(instantiate(rule.head, *b), ri, {d});
                        continue;
                    }
                    const auto& other = rule.body[1 - pos];
                    for (const auto& c : facts.candidates(other, *b)) {
                        auto b2 = unify(other, c, *b);
                        if (!b2) continue;
                        auto premises = pos == 0 ? std::vector<Triple>{d, c} : std::vector<Triple>{c, d};
                        emit(instantiate(rule.head, *b2), ri, std::move(premises));
                    }
                }
            }
        }
        delta.clear();
        for (auto& [t, deriv] : fresh) {
            facts.add(t);
            delta.insert(t);
            result.triples.push_back(t);
            result.derivations.emplace(t, std::move(deriv));
        }
    }
    return result;
}

}  // namespace oneedit
