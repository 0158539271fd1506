#include "oneedit/interpreter.hpp"

#include <cctype>
#include <vector>

namespace oneedit {
namespace {

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (lower(s[i]) != lower(prefix[i])) return false;
    }
    return true;
}

std::vector<std::size_t> find_all_ci(std::string_view s, std::string_view needle) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i + needle.size() <= s.size(); ++i) {
        if (starts_with_ci(s.substr(i), needle)) out.push_back(i);
    }
    return out;
}

std::string strip_terminal_punct(std::string s) {
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) s.pop_back();
    return canonicalize(s);
}

std::string strip_article(std::string_view s) {
    if (starts_with_ci(s, "the ") && s.size() > 4) return canonicalize(s.substr(4));
    return canonicalize(s);
}

std::optional<Triple> accept(std::string_view s, std::string_view r, std::string_view o,
                             const SchemaRegistry& schemas) {
    auto subject = canonicalize(s);
    auto relation = canonicalize(r);
    auto object = canonicalize(o);
    if (subject.empty() || relation.empty() || object.empty()) return std::nullopt;
    if (!schemas.contains(relation)) return std::nullopt;
    return Triple{std::move(subject), std::move(relation), std::move(object)};
}

// EDIT (<s> | <r> | <o>)
std::optional<Triple> match_dsl(std::string_view text, const SchemaRegistry& schemas) {
    if (!starts_with_ci(text, "EDIT")) return std::nullopt;
    auto rest = std::string_view(text).substr(4);
    while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
    if (rest.size() < 2 || rest.front() != '(' || rest.back() != ')') return std::nullopt;
    auto inner = rest.substr(1, rest.size() - 2);
    auto p1 = inner.find('|');
    if (p1 == std::string_view::npos) return std::nullopt;
    auto p2 = inner.find('|', p1 + 1);
    if (p2 == std::string_view::npos || inner.find('|', p2 + 1) != std::string_view::npos) {
        return std::nullopt;
    }
    return accept(inner.substr(0, p1), inner.substr(p1 + 1, p2 - p1 - 1), inner.substr(p2 + 1),
                  schemas);
}

// Change the <r> of <s> to <o>
std::optional<Triple> match_change(std::string_view text, const SchemaRegistry& schemas) {
    constexpr std::string_view prefix = "change the ";
    if (!starts_with_ci(text, prefix)) return std::nullopt;
    const std::string rest = strip_terminal_punct(std::string(text.substr(prefix.size())));
    const std::string_view sv = rest;
    for (auto of : find_all_ci(sv, " of ")) {
        for (auto to : find_all_ci(sv, " to ")) {
            if (to <= of + 3) continue;
            auto subject = strip_article(sv.substr(of + 4, to - of - 4));
            if (auto t = accept(subject, sv.substr(0, of), sv.substr(to + 4), schemas)) return t;
        }
    }
    return std::nullopt;
}

// Set <s> <r> to <o>
std::optional<Triple> match_set(std::string_view text, const SchemaRegistry& schemas) {
    constexpr std::string_view prefix = "set ";
    if (!starts_with_ci(text, prefix)) return std::nullopt;
    const std::string rest = strip_terminal_punct(std::string(text.substr(prefix.size())));
    const std::string_view sv = rest;
    for (auto to : find_all_ci(sv, " to ")) {
        auto left = sv.substr(0, to);
        for (std::size_t k = 0; k < left.size(); ++k) {
            if (left[k] != ' ') continue;
            auto subject = strip_article(left.substr(0, k));
            if (auto t = accept(subject, left.substr(k + 1), sv.substr(to + 4), schemas)) return t;
        }
    }
    return std::nullopt;
}

// Edit: <s>'s <r> is <o>
std::optional<Triple> match_possessive(std::string_view text, const SchemaRegistry& schemas) {
    constexpr std::string_view prefix = "edit:";
    if (!starts_with_ci(text, prefix)) return std::nullopt;
    const std::string rest = strip_terminal_punct(std::string(text.substr(prefix.size())));
    const std::string_view sv = rest;
    for (auto poss : find_all_ci(sv, "'s ")) {
        for (auto is : find_all_ci(sv, " is ")) {
            if (is < poss + 2) continue;
            auto subject = strip_article(sv.substr(0, poss));
            if (auto t = accept(subject, sv.substr(poss + 3, is - poss - 3), sv.substr(is + 4),
                                schemas)) {
                return t;
            }
        }
    }
    return std::nullopt;
}

}  // namespace

Intent interpret(std::string_view utterance, const SchemaRegistry& schemas) {
    const std::string text = canonicalize(utterance);
    for (auto* grammar : {&match_dsl, &match_change, &match_set, &match_possessive}) {
        if (auto t = grammar(text, schemas)) return EditIntent{std::move(*t)};
    }
    return GenerateIntent{std::string(utterance)};
}

std::string render_dsl(const Triple& t) {
    return "EDIT (" + t.subject + " | " + t.relation + " | " + t.object + ")";
}

std::optional<std::pair<std::string, std::string>> parse_question(std::string_view utterance,
                                                                  const SchemaRegistry& schemas) {
    const std::string text = strip_terminal_punct(canonicalize(utterance));
    const std::string_view sv = text;
    for (std::string_view lead : {"what is the ", "who is the ", "what is ", "who is "}) {
        if (!starts_with_ci(sv, lead)) continue;
        auto rest = sv.substr(lead.size());
        for (auto of : find_all_ci(rest, " of ")) {
            auto relation = canonicalize(rest.substr(0, of));
            if (schemas.contains(relation)) {
                auto subject = strip_article(rest.substr(of + 4));
                if (!subject.empty()) return std::pair{subject, relation};
            }
        }
        for (auto poss : find_all_ci(rest, "'s ")) {
            auto relation = canonicalize(rest.substr(poss + 3));
            if (schemas.contains(relation)) {
                auto subject = strip_article(rest.substr(0, poss));
                if (!subject.empty()) return std::pair{subject, relation};
            }
        }
    }
    return std::nullopt;
}

}  // namespace oneedit
