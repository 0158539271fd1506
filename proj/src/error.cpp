#include "oneedit/error.hpp"

namespace oneedit {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownRelation: return "UnknownRelation";
        case ErrorCode::MalformedTriple: return "MalformedTriple";
        case ErrorCode::InvalidSchema: return "InvalidSchema";
        case ErrorCode::RuleParse: return "RuleParse";
        case ErrorCode::RuleRelationUnknown: return "RuleRelationUnknown";
        case ErrorCode::NonFunctionalRelation: return "NonFunctionalRelation";
        case ErrorCode::UnresolvableRollback: return "UnresolvableRollback";
        case ErrorCode::KeyNotActive: return "KeyNotActive";
        case ErrorCode::UnknownKey: return "UnknownKey";
        case ErrorCode::EmptyCategory: return "EmptyCategory";
        case ErrorCode::InfeasibleFixture: return "InfeasibleFixture";
        case ErrorCode::Parse: return "Parse";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Scenario: return "Scenario";
    }
    return "Unknown";
}

}  // namespace oneedit
