#pragma once

// Multi-user knowledge service. A Session is the single-threaded state
// machine; KnowledgeService runs one writer thread over it, publishes an
// immutable snapshot after every mutation and persists an audit log from
// which the state can be rebuilt.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "oneedit/scenario.hpp"

namespace oneedit {

// An error with the HTTP status it maps to and a JSON body.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, nlohmann::json body)
        : std::runtime_error(body.value("error", "service error")), status_(status), body_(std::move(body)) {}
    int status() const noexcept { return status_; }
    const nlohmann::json& body() const noexcept { return body_; }

private:
    int status_;
    nlohmann::json body_;
};

int http_status(ErrorCode code);

struct SessionConfig {
    ModelConfig model;
    ControllerConfig controller;
    bool use_controller = true;
};

nlohmann::json to_json(const SessionConfig& c);
SessionConfig session_config_from_json(const nlohmann::json& j);

struct AuditEntry {
    std::uint64_t id = 0;
    std::string user;
    std::string action;  // "edit" | "rollback"
    nlohmann::json request;
    nlohmann::json response;

    bool operator==(const AuditEntry&) const = default;
};

nlohmann::json to_json(const AuditEntry& e);
AuditEntry audit_entry_from_json(const nlohmann::json& j);

struct HistoryFilter {
    std::optional<std::string> user;
    std::optional<std::string> subject;
};

class Session {
public:
    Session(World world, SessionConfig config);

    // Mutations; each appends one audit entry. Throw ServiceError.
    nlohmann::json edit(const std::string& user, const Triple& t,
                        const std::optional<std::string>& text = std::nullopt);
    nlohmann::json rollback(const std::string& user, const std::string& key);

    // Re-executes an audited request and checks the response matches.
    void replay(const AuditEntry& e);

    nlohmann::json query(const std::string& subject, const std::string& relation) const;
    nlohmann::json history(const HistoryFilter& f) const;
    nlohmann::json neighborhood(const std::string& subject, std::size_t n) const;

    const World& world() const { return world_; }
    const SessionConfig& config() const { return config_; }
    const Workspace& workspace() const { return ws_; }
    const std::vector<AuditEntry>& audit() const { return audit_; }
    std::uint64_t last_request_id() const { return audit_.empty() ? 0 : audit_.back().id; }

    bool same_state(const Session& o) const { return ws_ == o.ws_ && audit_ == o.audit_; }

private:
    EditKey edit_model_only(const std::string& user, const Triple& t, std::uint64_t id);
    void rollback_entry(Workspace& ws, const EditKey& key, const Triple& t);

    World world_;
    SessionConfig config_;
    Controller controller_;
    Workspace ws_;
    std::vector<AuditEntry> audit_;
};

// Parses an /api/edit body: {"text": "..."} or {"triple": {"s","r","o"}}.
struct EditBody {
    std::optional<std::string> text;
    std::optional<Triple> triple;
};
EditBody parse_edit_body(const nlohmann::json& body);

struct ServiceOptions {
    std::size_t queue_capacity = 64;
    std::optional<std::filesystem::path> data_dir;
};

class KnowledgeService {
public:
    using Options = ServiceOptions;

    // Fresh service; with a data dir, the initial world is written there.
    KnowledgeService(World world, SessionConfig config, Options options);
    // Restarts from a data dir written by a previous service.
    static std::unique_ptr<KnowledgeService> open(const std::filesystem::path& dir, Options options = {});
    ~KnowledgeService();

    KnowledgeService(const KnowledgeService&) = delete;
    KnowledgeService& operator=(const KnowledgeService&) = delete;

    // /api/edit: Generate intents are answered from the current snapshot;
    // edits go through the writer queue. Throws ServiceError (503 when the
    // queue is full).
    nlohmann::json handle_edit(const std::string& user, const nlohmann::json& body);
    nlohmann::json handle_rollback(const std::string& user, const std::string& key);
    nlohmann::json handle_query(const nlohmann::json& body) const;
    nlohmann::json handle_history(const HistoryFilter& f) const;
    nlohmann::json handle_neighborhood(const std::string& subject, std::size_t n) const;
    nlohmann::json handle_health() const;

    std::shared_ptr<const Session> snapshot() const;

private:
    struct Restored {};
    KnowledgeService(Restored, Session session, Options options);

    nlohmann::json submit(std::function<nlohmann::json(Session&)> mutation);
    void writer_loop();
    void publish();
    void persist(const Session& s);

    Options options_;
    Session session_;  // owned by the writer thread once it runs

    mutable std::mutex snapshot_mutex_;
    std::shared_ptr<const Session> snapshot_;

    mutable std::mutex queue_mutex_;
    std::condition_variable queue_cv_;
    std::deque<std::packaged_task<nlohmann::json()>> queue_;
    bool stopping_ = false;
    std::thread writer_;
};

// Persistent layout of a data dir.
namespace store {
void initialize(const std::filesystem::path& dir, const Session& fresh);
// Rebuilds a session from the initial files plus the audit log, then checks
// the state files agree when they describe the same request.
Session restore(const std::filesystem::path& dir);
void append_audit(const std::filesystem::path& dir, const AuditEntry& e);
void write_state(const std::filesystem::path& dir, const Session& s);
}  // namespace store

class HttpServer {
public:
    explicit HttpServer(KnowledgeService& service);
    ~HttpServer();

    // Binds and serves on a background thread; returns the bound port.
    int start(const std::string& host, int port);
    // Blocks serving on the calling thread.
    bool listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace oneedit
