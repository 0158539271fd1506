#include "oneedit/kg_io.hpp"

#include <fstream>
#include <sstream>

namespace oneedit {

using nlohmann::json;

json to_json(const Triple& t) { return json{{"s", t.subject}, {"r", t.relation}, {"o", t.object}}; }

Triple triple_from_json(const json& j) {
    if (!j.is_object() || !j.contains("s") || !j.contains("r") || !j.contains("o") ||
        !j["s"].is_string() || !j["r"].is_string() || !j["o"].is_string()) {
        throw Error(ErrorCode::Parse, "triple record needs string keys s, r, o: " + j.dump());
    }
    return Triple::make(j["s"].get<std::string>(), j["r"].get<std::string>(),
                        j["o"].get<std::string>());
}

SchemaRegistry parse_schema(const json& doc) {
    if (!doc.is_array()) throw Error(ErrorCode::Parse, "schema file must hold a JSON array");
    SchemaRegistry registry;
    for (const auto& item : doc) {
        if (!item.is_object() || !item.contains("name") || !item["name"].is_string()) {
            throw Error(ErrorCode::Parse, "schema entry without a name: " + item.dump());
        }
        RelationSchema s;
        s.name = item["name"].get<std::string>();
        if (item.contains("inverse") && !item["inverse"].is_null()) {
            s.inverse = item["inverse"].get<std::string>();
        }
        s.reversible = item.value("reversible", s.inverse.has_value());
        s.functional = item.value("functional", true);
        registry.add(std::move(s));
    }
    registry.complete_inverses();
    return registry;
}

json schema_to_json(const SchemaRegistry& schemas) {
    json out = json::array();
    for (const auto& [name, s] : schemas.all()) {
        out.push_back({{"name", name},
                       {"reversible", s.reversible},
                       {"inverse", s.inverse ? json(*s.inverse) : json(nullptr)},
                       {"functional", s.functional}});
    }
    return out;
}

std::vector<Triple> read_triples(std::istream& in) {
    std::vector<Triple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(triple_from_json(j));
    }
    return out;
}

void write_triples(std::ostream& out, const std::vector<Triple>& triples) {
    for (const auto& t : triples) out << to_json(t).dump() << '\n';
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

SchemaRegistry load_schema(const std::filesystem::path& path) {
    try {
        return parse_schema(json::parse(read_file(path)));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
}

KnowledgeGraph load_graph(const std::filesystem::path& kg_path, SchemaRegistry schemas) {
    KnowledgeGraph g(std::move(schemas));
    std::istringstream in(read_file(kg_path));
    for (const auto& t : read_triples(in)) g.upsert(t);
    return g;
}

std::vector<LogicalRule> load_rules(const std::filesystem::path& path) {
    return parse_rules(read_file(path));
}

AliasTable load_aliases(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::Parse, "alias table must be a JSON object");
    AliasTable table;
    for (const auto& [entity, aliases] : doc.items()) {
        auto& list = table[canonicalize(entity)];
        for (const auto& a : aliases) list.push_back(canonicalize(a.get<std::string>()));
    }
    return table;
}

void save_graph(const std::filesystem::path& path, const KnowledgeGraph& g) {
    std::ostringstream out;
    write_triples(out, {g.triples().begin(), g.triples().end()});
    write_file_atomic(path, out.str());
}

}  // namespace oneedit
