#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "oneedit/kg.hpp"
#include "oneedit/rules.hpp"

namespace oneedit {

using AliasTable = std::map<std::string, std::vector<std::string>>;

nlohmann::json to_json(const Triple& t);
Triple triple_from_json(const nlohmann::json& j);

// Schema file: JSON array of {"name", "reversible", "inverse", "functional"}.
// "functional" defaults to true when omitted.
SchemaRegistry parse_schema(const nlohmann::json& doc);
nlohmann::json schema_to_json(const SchemaRegistry& schemas);

// KG file: one {"s","r","o"} object per line.
std::vector<Triple> read_triples(std::istream& in);
void write_triples(std::ostream& out, const std::vector<Triple>& triples);

SchemaRegistry load_schema(const std::filesystem::path& path);
KnowledgeGraph load_graph(const std::filesystem::path& kg_path, SchemaRegistry schemas);
std::vector<LogicalRule> load_rules(const std::filesystem::path& path);
AliasTable load_aliases(const std::filesystem::path& path);

void save_graph(const std::filesystem::path& path, const KnowledgeGraph& g);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace oneedit
