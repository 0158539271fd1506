#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <thread>

#include "oneedit/service.hpp"

namespace oneedit {

using nlohmann::json;

struct HttpServer::Impl {
    KnowledgeService& service;
    httplib::Server server;
    std::thread thread;

    explicit Impl(KnowledgeService& s) : service(s) { routes(); }

    static std::string user_of(const httplib::Request& req) {
        auto user = req.get_header_value("X-User");
        return user.empty() ? "anonymous" : user;
    }

    static void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    template <typename Fn>
    static httplib::Server::Handler guarded(Fn fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                reply(res, 200, fn(req));
            } catch (const ServiceError& e) {
                reply(res, e.status(), e.body());
            } catch (const json::exception& e) {
                reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
            } catch (const Error& e) {
                reply(res, http_status(e.code()), {{"error", e.what()}});
            } catch (const std::exception& e) {
                reply(res, 500, {{"error", e.what()}});
            }
        };
    }

    void routes() {
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Headers", "Content-Type, X-User"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server.Post("/api/edit", guarded([this](const httplib::Request& req) {
            return service.handle_edit(user_of(req), json::parse(req.body));
        }));
        server.Post("/api/query", guarded([this](const httplib::Request& req) {
            return service.handle_query(json::parse(req.body));
        }));
        server.Get("/api/history", guarded([this](const httplib::Request& req) {
            HistoryFilter f;
            if (req.has_param("user")) f.user = req.get_param_value("user");
            if (req.has_param("subject")) f.subject = req.get_param_value("subject");
            return service.handle_history(f);
        }));
        server.Post(R"(/api/rollback/([^/]+))", guarded([this](const httplib::Request& req) {
            return service.handle_rollback(user_of(req), req.matches[1].str());
        }));
        server.Get("/api/graph/neighborhood", guarded([this](const httplib::Request& req) {
            if (!req.has_param("subject")) throw ServiceError(400, {{"error", "subject is required"}});
            std::size_t n = 8;
            if (req.has_param("n")) {
                const auto text = req.get_param_value("n");
                const bool digits = !text.empty() && text.size() <= 9 &&
                                    std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); });
                if (!digits) throw ServiceError(400, {{"error", "n must be a non-negative integer"}});
                n = std::stoul(text);
            }
            return service.handle_neighborhood(req.get_param_value("subject"), n);
        }));
        server.Get("/api/health", guarded([this](const httplib::Request&) { return service.handle_health(); }));
    }
};

HttpServer::HttpServer(KnowledgeService& service) : impl_(std::make_unique<Impl>(service)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void HttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace oneedit
