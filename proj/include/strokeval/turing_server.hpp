#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "strokeval/turing.hpp"

namespace strokeval::turing {

struct ServerConfig {
    std::string bind_address = "127.0.0.1";
    int port = 8080;                        // 0 picks a free port
    std::filesystem::path data_dir = "turing-data";
    std::filesystem::path render_dir;       // served under /renders/
    std::optional<std::filesystem::path> pool;  // default pool for POST /sessions
    std::string admin_token;
    std::string rubric_completeness = "Rate how completely the outlined region covers the lesion (1 = poor, 6 = excellent).";
    std::string rubric_correctness = "Rate how accurately the outline follows the lesion border (1 = poor, 6 = excellent).";
};

// HTTP front end over a Store.
//   POST /sessions               admin; {"raters": [...], "seed": n, "pool"?: {...}}
//   GET  /sessions/{id}/next     next unscored item, blinded
//   POST /sessions/{id}/scores   {"item_id", "completeness", "correctness"}
//   POST /sessions/{id}/close    admin
//   GET  /report                 admin
//   GET  /rubric
//   GET  /renders/<file>
// Admin requests carry "Authorization: Bearer <token>".
class Server {
public:
    explicit Server(ServerConfig config);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and returns the port actually used.
    int bind();
    // Blocks until stop().
    void serve();
    void stop();

    Store& store();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace strokeval::turing
