// HTTP service for the blinded rating study.

#include <csignal>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "strokeval/error.hpp"
#include "strokeval/turing_server.hpp"

namespace {

strokeval::turing::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    using namespace strokeval::turing;
    CLI::App app{"Rating study service"};
    ServerConfig config;
    std::string rubric;
    std::string pool;
    app.add_option("--bind", config.bind_address, "bind address")->envname("STROKEVAL_TURING_BIND")->capture_default_str();
    app.add_option("--port", config.port, "port, 0 for any")->envname("STROKEVAL_TURING_PORT")->capture_default_str();
    app.add_option("--data-dir", config.data_dir, "journal and snapshot directory")
        ->envname("STROKEVAL_TURING_DATA")
        ->capture_default_str();
    app.add_option("--renders", config.render_dir, "directory served under /renders/")
        ->envname("STROKEVAL_TURING_RENDERS")
        ->check(CLI::ExistingDirectory);
    app.add_option("--pool", pool, "pool.json from turing export")->envname("STROKEVAL_TURING_POOL")->check(CLI::ExistingFile);
    app.add_option("--admin-token", config.admin_token, "shared admin token")->envname("STROKEVAL_TURING_ADMIN_TOKEN");
    app.add_option("--rubric", rubric, "JSON with completeness and correctness rubric text")->check(CLI::ExistingFile);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (!pool.empty()) config.pool = pool;
    try {
        if (!rubric.empty()) {
            std::ifstream in(rubric);
            const auto j = Json::parse(in);
            config.rubric_completeness = j.value("completeness", config.rubric_completeness);
            config.rubric_correctness = j.value("correctness", config.rubric_correctness);
        }
        if (config.admin_token.empty()) std::cerr << "warning: no admin token, admin endpoints disabled\n";
        Server server(config);
        const int port = server.bind();
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cerr << "listening on " << config.bind_address << ":" << port << "\n";
        server.serve();
        g_server = nullptr;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
