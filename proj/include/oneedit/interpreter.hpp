#pragma once

// Deterministic front end that turns a user utterance into either an edit
// command carrying one triple or a pass-through generation request.
//
// Edit grammars, tried in order:
//   1. EDIT (<s> | <r> | <o>)
//   2. Change the <r> of <s> to <o>
//   3. Set <s> <r> to <o>
//   4. Edit: <s>'s <r> is <o>
// Keywords match case-insensitively; field text keeps its case. An utterance
// whose extracted relation is not registered falls through to Generate.

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "oneedit/kg.hpp"

namespace oneedit {

struct EditIntent {
    Triple triple;
    bool operator==(const EditIntent&) const = default;
};

struct GenerateIntent {
    std::string text;
    bool operator==(const GenerateIntent&) const = default;
};

using Intent = std::variant<EditIntent, GenerateIntent>;

Intent interpret(std::string_view utterance, const SchemaRegistry& schemas);

// Grammar 1 rendering; interpret(render_dsl(t)) yields Edit(t).
std::string render_dsl(const Triple& t);

// "What/Who is the <r> of <s>?" style questions, for answering Generate
// intents from the model. Nullopt when no registered relation is found.
std::optional<std::pair<std::string, std::string>> parse_question(std::string_view text,
                                                                  const SchemaRegistry& schemas);

}  // namespace oneedit
