#include "strokeval/turing_server.hpp"

#include <fstream>

#include "httplib.h"
#include "strokeval/error.hpp"

namespace strokeval::turing {

namespace {

constexpr const char* kJson = "application/json";

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownSession:
        case ErrorCode::UnknownItem: return 404;
        case ErrorCode::ClosedSession: return 409;
        case ErrorCode::OutOfRangeScore:
        case ErrorCode::InsufficientPool:
        case ErrorCode::NoCompletedSessions: return 422;
        case ErrorCode::InvalidArgument: return 400;
        default: return 500;
    }
}

void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    reply(res, status, Json{{"error", Json{{"code", code}, {"message", message}}}});
}

bool token_matches(const std::string& given, const std::string& expected) {
    if (given.size() != expected.size()) return false;
    unsigned char diff = 0;
    for (std::size_t i = 0; i < given.size(); ++i) diff |= static_cast<unsigned char>(given[i] ^ expected[i]);
    return diff == 0;
}

}  // namespace

struct Server::Impl {
    ServerConfig config;
    Store store;
    httplib::Server http;

    explicit Impl(ServerConfig c) : config(std::move(c)), store(config.data_dir) {}

    bool admin(const httplib::Request& req, httplib::Response& res) const {
        if (config.admin_token.empty()) {
            reply_error(res, 403, "Forbidden", "admin endpoints are disabled without an admin token");
            return false;
        }
        const auto header = req.get_header_value("Authorization");
        const std::string prefix = "Bearer ";
        if (!header.starts_with(prefix) || !token_matches(header.substr(prefix.size()), config.admin_token)) {
            reply_error(res, 401, "Unauthorized", "admin token required");
            return false;
        }
        return true;
    }

    template <class Fn>
    void guarded(httplib::Response& res, Fn&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            reply_error(res, http_status(e.code()), to_string(e.code()), e.what());
        } catch (const Json::exception& e) {
            reply_error(res, 400, "BadRequest", e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, "Internal", e.what());
        }
    }

    void routes() {
        http.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admin(req, res)) return;
            guarded(res, [&] {
                const auto body = Json::parse(req.body);
                std::vector<PoolCase> pool;
                if (body.contains("pool")) {
                    pool = pool_from_json(body["pool"]);
                } else if (config.pool) {
                    std::ifstream in(*config.pool, std::ios::binary);
                    if (!in) throw Error(ErrorCode::Io, "cannot open pool " + config.pool->string());
                    pool = pool_from_json(Json::parse(in));
                } else {
                    throw Error(ErrorCode::InvalidArgument, "no pool in request and none configured");
                }
                const auto raters = body.at("raters").get<std::vector<std::string>>();
                const auto seed = body.at("seed").get<std::uint64_t>();
                SessionOptions options;
                if (body.contains("min_items")) options.min_items = body["min_items"].get<int>();
                if (body.contains("max_items")) options.max_items = body["max_items"].get<int>();
                const auto sessions = create_sessions(pool, raters, seed, options);
                store.add_sessions(sessions);
                Json out = Json::array();
                for (const auto& s : sessions) {
                    out.push_back(Json{{"session_id", s.session_id},
                                       {"rater_id", s.rater_id},
                                       {"item_count", s.items.size()}});
                }
                reply(res, 201, Json{{"sessions", out}});
            });
        });

        http.Get(R"(/sessions/([A-Za-z0-9_-]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { reply(res, 200, rater_view(store.session(req.matches[1]), "/renders/")); });
        });

        http.Post(R"(/sessions/([A-Za-z0-9_-]+)/scores)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto body = Json::parse(req.body);
                const auto& c = body.at("completeness");
                const auto& k = body.at("correctness");
                if (!c.is_number_integer() || !k.is_number_integer()) {
                    throw Error(ErrorCode::OutOfRangeScore, "scores must be integers 1-6");
                }
                const auto ack = store.submit(req.matches[1], body.at("item_id").get<std::string>(),
                                              c.get<int>(), k.get<int>());
                reply(res, 200, Json{{"status", "ok"},
                                     {"session_id", ack.session_id},
                                     {"item_id", ack.item_id},
                                     {"overwritten", ack.overwritten},
                                     {"progress", Json{{"scored", ack.scored}, {"total", ack.total}}}});
            });
        });

        http.Post(R"(/sessions/([A-Za-z0-9_-]+)/close)", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admin(req, res)) return;
            guarded(res, [&] {
                store.close(req.matches[1]);
                reply(res, 200, Json{{"status", "closed"}, {"session_id", std::string(req.matches[1])}});
            });
        });

        http.Get("/report", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admin(req, res)) return;
            guarded(res, [&] {
                const auto sessions = store.sessions();
                reply(res, 200, to_json(turing_report(sessions)));
            });
        });

        http.Get("/rubric", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, 200, Json{{"completeness", config.rubric_completeness},
                                 {"correctness", config.rubric_correctness},
                                 {"scale", Json{{"min", kMinScore}, {"max", kMaxScore}}}});
        });

        if (!config.render_dir.empty()) {
            if (!http.set_mount_point("/renders", config.render_dir.string())) {
                throw Error(ErrorCode::Io, "render directory " + config.render_dir.string() + " does not exist");
            }
        }
    }
};

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) { impl_->routes(); }

Server::~Server() { stop(); }

int Server::bind() {
    auto& c = impl_->config;
    if (c.port == 0) {
        c.port = impl_->http.bind_to_any_port(c.bind_address);
        if (c.port < 0) throw Error(ErrorCode::Io, "cannot bind " + c.bind_address);
    } else if (!impl_->http.bind_to_port(c.bind_address, c.port)) {
        throw Error(ErrorCode::Io, "cannot bind " + c.bind_address + ":" + std::to_string(c.port));
    }
    return c.port;
}

void Server::serve() { impl_->http.listen_after_bind(); }

void Server::stop() {
    if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

Store& Server::store() { return impl_->store; }

}  // namespace strokeval::turing
