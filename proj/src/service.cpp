#include "oneedit/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <set>
#include <sstream>

#include "oneedit/interpreter.hpp"
#include "oneedit/kg_io.hpp"

namespace oneedit {

using nlohmann::json;
namespace fs = std::filesystem;

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedTriple:
        case ErrorCode::Parse:
            return 400;
        case ErrorCode::UnknownKey:
            return 404;
        case ErrorCode::UnresolvableRollback:
            return 409;
        case ErrorCode::KeyNotActive:
            return 410;
        case ErrorCode::UnknownRelation:
        case ErrorCode::NonFunctionalRelation:
            return 422;
        default:
            return 500;
    }
}

namespace {

[[noreturn]] void fail(int status, const std::string& message, json extra = json::object()) {
    extra["error"] = message;
    throw ServiceError(status, std::move(extra));
}

[[noreturn]] void fail(const Error& e) { fail(http_status(e.code()), e.what()); }

}  // namespace

json to_json(const SessionConfig& c) {
    return to_json(ScenarioConfig{c.model, c.controller, c.use_controller});
}

SessionConfig session_config_from_json(const json& j) {
    auto sc = scenario_config_from_json(j);
    return {sc.model, sc.controller, sc.use_controller};
}

json to_json(const AuditEntry& e) {
    return json{{"requestId", e.id}, {"user", e.user}, {"action", e.action},
                {"request", e.request}, {"response", e.response}};
}

AuditEntry audit_entry_from_json(const json& j) {
    return {j.at("requestId").get<std::uint64_t>(), j.at("user").get<std::string>(),
            j.at("action").get<std::string>(), j.at("request"), j.at("response")};
}

// --- session ---------------------------------------------------------------

Session::Session(World world, SessionConfig config)
    : world_(std::move(world)),
      config_(std::move(config)),
      controller_(world_.rules, world_.aliases, config_.controller),
      ws_{world_.kg, SimulatedModel(config_.model, world_.base), {}} {}

json Session::edit(const std::string& user, const Triple& raw, const std::optional<std::string>& text) {
    Triple t;
    try {
        t = Triple::make(raw.subject, raw.relation, raw.object);
    } catch (const Error& e) {
        fail(e);
    }
    if (!ws_.kg.schemas().contains(t.relation)) fail(422, "unknown relation " + t.relation);

    const std::uint64_t id = last_request_id() + 1;
    const auto conflict = classify_conflict(ws_.kg, t);
    json response{{"requestId", id},      {"intent", "edit"},
                  {"triple", to_json(t)}, {"dsl", render_dsl(t)},
                  {"conflict", to_json(conflict)}};

    if (config_.use_controller) {
        EditPlan plan;
        try {
            plan = controller_.plan(ws_.kg, ws_.model, ws_.cache, t);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::UnresolvableRollback) {
                fail(409, e.what(), {{"conflict", to_json(conflict)}});
            }
            fail(e);
        }
        auto receipt = apply_plan(ws_, plan, {user, id});
        response["plan"] = to_json(plan);
        response["receipt"] = to_json(receipt);
        if (plan.already_present) response["note"] = "AlreadyPresent";
    } else {
        auto key = edit_model_only(user, t, id);
        response["receipt"] = to_json(AppliedReceipt{{ReceiptItem::Action::Edited, key, t}});
    }

    json request{{"triple", to_json(t)}};
    if (text) request["text"] = *text;
    audit_.push_back({id, user, "edit", std::move(request), response});
    return response;
}

EditKey Session::edit_model_only(const std::string& user, const Triple& t, std::uint64_t id) {
    return oneedit::edit(ws_.model, ws_.cache, t, {user, 1, id});
}

json Session::rollback(const std::string& user, const std::string& key_text) {
    const auto key = EditKey::parse(key_text);
    const CacheEntry* entry = key ? ws_.cache.find(*key) : nullptr;
    if (!entry) fail(404, "unknown key " + key_text);
    if (entry->status != EditStatus::Active) fail(410, "key already rolled back: " + key_text);

    const std::uint64_t id = last_request_id() + 1;
    const auto& schemas = ws_.kg.schemas();

    std::vector<const CacheEntry*> targets{entry};
    if (auto twin = reverse_twin(schemas, entry->triple)) {
        if (auto tk = ws_.cache.active_key_for(*twin)) {
            const auto* te = ws_.cache.find(*tk);
            if (te->plan_id == entry->plan_id && te->key != entry->key) targets.push_back(te);
        }
    }

    Workspace next = ws_;
    AppliedReceipt receipt;
    std::set<std::pair<std::string, std::string>> slots;
    for (const auto* te : targets) {
        rollback_entry(next, te->key, te->triple);
        receipt.push_back({ReceiptItem::Action::RolledBack, te->key, te->triple});
        slots.insert({te->triple.subject, te->triple.relation});
    }

    // Reinstate what the originating plan displaced from those slots.
    const AuditEntry* origin = nullptr;
    for (const auto& a : audit_) {
        if (a.id == entry->plan_id && a.action == "edit") origin = &a;
    }
    if (origin && origin->response.contains("receipt")) {
        AppliedReceipt displaced;
        for (auto& item : receipt_from_json(origin->response["receipt"])) {
            if (item.action == ReceiptItem::Action::RolledBack || item.action == ReceiptItem::Action::GraphRemoved) {
                displaced.push_back(std::move(item));
            }
        }
        std::set<Triple> chosen;
        for (const auto& item : displaced) {
            if (slots.contains({item.triple.subject, item.triple.relation})) chosen.insert(item.triple);
        }
        for (const auto& item : displaced) {
            auto twin = reverse_twin(schemas, item.triple);
            if (twin && chosen.contains(*twin)) chosen.insert(item.triple);
        }
        for (const auto& item : displaced) {
            const auto& x = item.triple;
            if (!chosen.contains(x)) continue;
            const bool free = schemas.is_functional(x.relation) ? next.kg.lookup(x.subject, x.relation).empty()
                                                                : !next.kg.contains(x);
            if (!free) continue;
            next.kg.upsert(x);
            if (item.action == ReceiptItem::Action::RolledBack) {
                auto k = oneedit::edit(next.model, next.cache, x, {user, 1, id});
                receipt.push_back({ReceiptItem::Action::Edited, k, x});
            } else {
                receipt.push_back({ReceiptItem::Action::GraphAdded, std::nullopt, x});
            }
        }
    }
    ws_ = std::move(next);

    json response{{"requestId", id}, {"action", "rollback"}, {"key", key_text}, {"receipt", to_json(receipt)}};
    audit_.push_back({id, user, "rollback", json{{"key", key_text}}, response});
    return response;
}

void Session::rollback_entry(Workspace& ws, const EditKey& key, const Triple& t) {
    oneedit::rollback(ws.model, ws.cache, key);
    if (config_.use_controller) ws.kg.erase(t);
}

void Session::replay(const AuditEntry& e) {
    if (e.id != last_request_id() + 1) {
        throw Error(ErrorCode::Io, "audit log skips to request " + std::to_string(e.id));
    }
    json response;
    try {
        if (e.action == "edit") {
            std::optional<std::string> text;
            if (e.request.contains("text")) text = e.request["text"].get<std::string>();
            response = edit(e.user, triple_from_json(e.request.at("triple")), text);
        } else if (e.action == "rollback") {
            response = rollback(e.user, e.request.at("key").get<std::string>());
        } else {
            throw Error(ErrorCode::Io, "unknown audit action " + e.action);
        }
    } catch (const ServiceError& se) {
        throw Error(ErrorCode::Io, "audited request " + std::to_string(e.id) + " fails on replay: " + se.what());
    }
    if (response != e.response) {
        throw Error(ErrorCode::Io, "audit replay diverged at request " + std::to_string(e.id));
    }
}

json Session::query(const std::string& subject, const std::string& relation) const {
    const auto s = canonicalize(subject);
    const auto r = canonicalize(relation);
    auto a = ws_.model.query(s, r);
    if (!a) fail(404, "no answer for (" + s + ", " + r + ")", {{"subject", s}, {"relation", r}});
    auto key = ws_.cache.active_key_for(Triple{s, r, a->answer});
    return json{{"subject", s},
                {"relation", r},
                {"answer", a->answer},
                {"score", to_json(a->score)},
                {"provenance", key ? json(key->str()) : json(nullptr)}};
}

json Session::history(const HistoryFilter& f) const {
    auto touches = [&](const AuditEntry& e) {
        const auto& subject = *f.subject;
        if (e.request.contains("triple") && e.request["triple"].value("s", "") == subject) return true;
        if (e.response.contains("receipt")) {
            for (const auto& item : e.response["receipt"]) {
                if (item["triple"].value("s", "") == subject) return true;
            }
        }
        return false;
    };
    json out = json::array();
    for (const auto& e : audit_) {
        if (f.user && e.user != *f.user) continue;
        if (f.subject && !touches(e)) continue;
        json j = to_json(e);
        if (e.action == "edit" && e.response.contains("receipt")) {
            json status = json::object();
            for (const auto& item : e.response["receipt"]) {
                if (item["action"] != "edited") continue;
                const auto key = item["key"].get<std::string>();
                const auto* ce = ws_.cache.find(*EditKey::parse(key));
                status[key] = ce->status == EditStatus::Active ? "Active" : "RolledBack";
            }
            j["status"] = status;
        }
        out.push_back(std::move(j));
    }
    return out;
}

json Session::neighborhood(const std::string& subject, std::size_t n) const {
    const auto s = canonicalize(subject);
    json triples = json::array();
    json edges = json::array();
    std::set<std::string> nodes;
    for (const auto& t : ws_.kg.neighborhood(s, n)) {
        triples.push_back(to_json(t));
        edges.push_back({{"source", t.subject}, {"relation", t.relation}, {"target", t.object}});
        nodes.insert(t.subject);
        nodes.insert(t.object);
    }
    return json{{"subject", s}, {"n", n}, {"triples", triples}, {"nodes", nodes}, {"edges", edges}};
}

EditBody parse_edit_body(const json& body) {
    if (!body.is_object()) fail(400, "body must be a JSON object");
    EditBody b;
    if (body.contains("text")) {
        if (!body["text"].is_string()) fail(400, "text must be a string");
        b.text = body["text"].get<std::string>();
    }
    if (body.contains("triple")) {
        try {
            b.triple = triple_from_json(body["triple"]);
        } catch (const Error& e) {
            fail(400, e.what());
        } catch (const json::exception& e) {
            fail(400, std::string("malformed triple: ") + e.what());
        }
    }
    if (b.text.has_value() == b.triple.has_value()) fail(400, "body needs exactly one of text or triple");
    return b;
}

// --- persistence -----------------------------------------------------------

namespace store {

namespace {

constexpr const char* session_file = "session.json";
constexpr const char* base_kg_file = "base_kg.jsonl";
constexpr const char* base_model_file = "base_model.jsonl";
constexpr const char* audit_file = "audit.jsonl";
constexpr const char* kg_file = "kg.jsonl";
constexpr const char* cache_file = "cache.jsonl";
constexpr const char* state_file = "state.json";

std::string graph_text(const KnowledgeGraph& g) {
    std::ostringstream out;
    write_triples(out, {g.triples().begin(), g.triples().end()});
    return out.str();
}

std::string cache_text(const EditCache& c) {
    std::ostringstream out;
    c.write_log(out);
    return out.str();
}

}  // namespace

void initialize(const fs::path& dir, const Session& fresh) {
    fs::create_directories(dir);
    if (fs::exists(dir / audit_file)) {
        throw Error(ErrorCode::Io, dir.string() + " already holds a session; restart from it instead");
    }
    const auto& w = fresh.world();
    json doc{{"config", to_json(fresh.config())},
             {"schema", schema_to_json(w.kg.schemas())},
             {"rules", render_rules(w.rules)},
             {"aliases", w.aliases}};
    write_file_atomic(dir / session_file, doc.dump(2) + "\n");
    write_file_atomic(dir / base_kg_file, graph_text(w.kg));
    std::ostringstream model;
    write_score_table(model, w.base);
    write_file_atomic(dir / base_model_file, model.str());
    write_state(dir, fresh);
    write_file_atomic(dir / audit_file, "");
}

Session restore(const fs::path& dir) {
    json doc;
    try {
        doc = json::parse(read_file(dir / session_file));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("session.json: ") + e.what());
    }
    World w;
    w.kg = load_graph(dir / base_kg_file, parse_schema(doc.at("schema")));
    w.rules = parse_rules(doc.at("rules").get<std::string>());
    w.aliases = doc.at("aliases").get<AliasTable>();
    {
        std::ifstream in(dir / base_model_file);
        w.base = read_score_table(in);
    }
    Session session(std::move(w), session_config_from_json(doc.at("config")));

    // A torn final line is a request that never committed; drop it.
    const std::string audit = read_file(dir / audit_file);
    std::size_t pos = 0;
    std::size_t committed = 0;
    while (pos < audit.size()) {
        const auto end = audit.find('\n', pos);
        if (end == std::string::npos) break;
        const auto line = audit.substr(pos, end - pos);
        AuditEntry entry;
        try {
            entry = audit_entry_from_json(json::parse(line));
        } catch (const json::exception&) {
            throw Error(ErrorCode::Parse, "corrupt audit record at byte " + std::to_string(pos));
        }
        session.replay(entry);
        pos = end + 1;
        committed = pos;
    }
    if (committed != audit.size()) fs::resize_file(dir / audit_file, committed);

    json state;
    try {
        state = json::parse(read_file(dir / state_file));
    } catch (const std::exception&) {
        state = json::object();
    }
    if (state.value("lastRequestId", std::uint64_t{0}) == session.last_request_id()) {
        if (read_file(dir / kg_file) != graph_text(session.workspace().kg) ||
            read_file(dir / cache_file) != cache_text(session.workspace().cache)) {
            throw Error(ErrorCode::Io, "state files disagree with the audit log");
        }
    }
    return session;
}

void append_audit(const fs::path& dir, const AuditEntry& e) {
    const auto line = to_json(e).dump() + "\n";
    const auto path = (dir / audit_file).string();
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd < 0) throw Error(ErrorCode::Io, "cannot open " + path);
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(fd, line.data() + written, line.size() - written);
        if (n < 0) {
            ::close(fd);
            throw Error(ErrorCode::Io, "cannot append to " + path);
        }
        written += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

void write_state(const fs::path& dir, const Session& s) {
    write_file_atomic(dir / kg_file, graph_text(s.workspace().kg));
    write_file_atomic(dir / cache_file, cache_text(s.workspace().cache));
    write_file_atomic(dir / state_file, json{{"lastRequestId", s.last_request_id()}}.dump() + "\n");
}

}  // namespace store

// --- service ---------------------------------------------------------------

KnowledgeService::KnowledgeService(World world, SessionConfig config, Options options)
    : options_(std::move(options)), session_(std::move(world), std::move(config)) {
    if (options_.data_dir) store::initialize(*options_.data_dir, session_);
    publish();
    writer_ = std::thread([this] { writer_loop(); });
}

KnowledgeService::KnowledgeService(Restored, Session session, Options options)
    : options_(std::move(options)), session_(std::move(session)) {
    publish();
    writer_ = std::thread([this] { writer_loop(); });
}

std::unique_ptr<KnowledgeService> KnowledgeService::open(const fs::path& dir, Options options) {
    options.data_dir = dir;
    auto session = store::restore(dir);
    return std::unique_ptr<KnowledgeService>(new KnowledgeService(Restored{}, std::move(session), std::move(options)));
}

KnowledgeService::~KnowledgeService() {
    {
        std::lock_guard lock(queue_mutex_);
        stopping_ = true;
    }
    queue_cv_.notify_all();
    if (writer_.joinable()) writer_.join();
}

void KnowledgeService::writer_loop() {
    for (;;) {
        std::packaged_task<json()> task;
        {
            std::unique_lock lock(queue_mutex_);
            queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
            if (queue_.empty()) return;
            task = std::move(queue_.front());
            queue_.pop_front();
        }
        task();
    }
}

void KnowledgeService::publish() {
    auto snap = std::make_shared<const Session>(session_);
    std::lock_guard lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
}

void KnowledgeService::persist(const Session& s) {
    if (!options_.data_dir) return;
    store::append_audit(*options_.data_dir, s.audit().back());
    store::write_state(*options_.data_dir, s);
}

std::shared_ptr<const Session> KnowledgeService::snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return snapshot_;
}

json KnowledgeService::submit(std::function<json(Session&)> mutation) {
    std::packaged_task<json()> task([this, mutation = std::move(mutation)] {
        json response = mutation(session_);
        persist(session_);
        publish();
        return response;
    });
    auto result = task.get_future();
    {
        std::lock_guard lock(queue_mutex_);
        if (stopping_) fail(503, "service is shutting down");
        if (queue_.size() >= options_.queue_capacity) fail(503, "writer queue is full");
        queue_.push_back(std::move(task));
    }
    queue_cv_.notify_one();
    return result.get();
}

json KnowledgeService::handle_edit(const std::string& user, const json& body) {
    const auto b = parse_edit_body(body);
    if (b.triple) {
        const Triple t = *b.triple;
        return submit([user, t](Session& s) { return s.edit(user, t); });
    }
    const auto snap = snapshot();
    const auto& schemas = snap->workspace().kg.schemas();
    auto intent = interpret(*b.text, schemas);
    if (auto* gen = std::get_if<GenerateIntent>(&intent)) {
        json response{{"intent", "generate"}, {"text", gen->text}, {"answer", nullptr}};
        if (auto q = parse_question(gen->text, schemas)) {
            response["question"] = {{"subject", q->first}, {"relation", q->second}};
            try {
                response["answer"] = snap->query(q->first, q->second);
            } catch (const ServiceError&) {
            }
        }
        return response;
    }
    const Triple t = std::get<EditIntent>(intent).triple;
    const std::string text = *b.text;
    return submit([user, t, text](Session& s) { return s.edit(user, t, text); });
}

json KnowledgeService::handle_rollback(const std::string& user, const std::string& key) {
    return submit([user, key](Session& s) { return s.rollback(user, key); });
}

json KnowledgeService::handle_query(const json& body) const {
    if (!body.is_object()) fail(400, "body must be a JSON object");
    const auto snap = snapshot();
    if (body.contains("subject") && body.contains("relation")) {
        if (!body["subject"].is_string() || !body["relation"].is_string()) fail(400, "subject and relation must be strings");
        return snap->query(body["subject"].get<std::string>(), body["relation"].get<std::string>());
    }
    if (body.contains("text") && body["text"].is_string()) {
        auto q = parse_question(body["text"].get<std::string>(), snap->workspace().kg.schemas());
        if (!q) fail(400, "could not read a (subject, relation) question from the text");
        return snap->query(q->first, q->second);
    }
    fail(400, "body needs subject and relation, or text");
}

json KnowledgeService::handle_history(const HistoryFilter& f) const { return snapshot()->history(f); }

json KnowledgeService::handle_neighborhood(const std::string& subject, std::size_t n) const {
    return snapshot()->neighborhood(subject, n);
}

json KnowledgeService::handle_health() const {
    std::size_t depth;
    {
        std::lock_guard lock(queue_mutex_);
        depth = queue_.size();
    }
    const auto snap = snapshot();
    return json{{"status", "ok"},
                {"lastRequestId", snap->last_request_id()},
                {"queueDepth", depth},
                {"queueCapacity", options_.queue_capacity},
                {"backend", to_string(snap->config().model.backend)}};
}

}  // namespace oneedit
