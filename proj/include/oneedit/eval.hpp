#pragma once

// Evaluation metrics over a simulated model: reliability, locality and the
// three portability categories.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oneedit/editor.hpp"

namespace oneedit {

enum class Category { Reliability, Locality, Reverse, OneHop, SubReplace };

std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

struct EvalCase {
    QueryKey prompt;
    std::string expected;  // empty for locality cases
    Category category = Category::Reliability;
    std::optional<std::string> pre_edit_expected;
    std::optional<Triple> source;  // the edit a case was generated from

    bool operator==(const EvalCase&) const = default;
};

nlohmann::json to_json(const EvalCase& c);
EvalCase eval_case_from_json(const nlohmann::json& j);
nlohmann::json suite_to_json(const std::vector<EvalCase>& suite);
std::vector<EvalCase> suite_from_json(const nlohmann::json& j);

struct Ratio {
    std::uint64_t passed = 0;
    std::uint64_t total = 0;

    Rational value() const;
    std::string decimal() const;  // 3 places, half up
    bool operator==(const Ratio&) const = default;
};

std::string decimal3(const Rational& q);

// All cases must share the category the metric expects; throws EmptyCategory
// on an empty span.
Ratio eval_reliability(const SimulatedModel& m, std::span<const EvalCase> cases);
Ratio eval_locality(const SimulatedModel& pre, const SimulatedModel& post,
                    std::span<const EvalCase> cases);

struct Portability {
    Ratio reverse;
    Ratio one_hop;
    Ratio sub_replace;
};
Portability eval_portability(const SimulatedModel& m, std::span<const EvalCase> cases);

// Single-threaded versions kept as references for the parallel kernels.
namespace serial {
Ratio eval_reliability(const SimulatedModel& m, std::span<const EvalCase> cases);
Ratio eval_locality(const SimulatedModel& pre, const SimulatedModel& post,
                    std::span<const EvalCase> cases);
}  // namespace serial

std::vector<EvalCase> select(std::span<const EvalCase> suite, Category c);

// Categories without cases are absent and do not enter the average.
struct MetricsReport {
    std::optional<Ratio> reliability;
    std::optional<Ratio> locality;
    std::optional<Ratio> reverse;
    std::optional<Ratio> one_hop;
    std::optional<Ratio> sub_replace;

    std::optional<Rational> average() const;
    bool operator==(const MetricsReport&) const = default;
};

MetricsReport evaluate(const SimulatedModel& pre, const SimulatedModel& post,
                       std::span<const EvalCase> suite);

nlohmann::json to_json(const MetricsReport& r);

inline constexpr std::string_view csv_header =
    "Method,Reliability,Locality,Reverse,One-Hop,Sub-Replace,Average";
std::string csv_row(std::string_view method, const MetricsReport& r);

}  // namespace oneedit
