#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "strokeval/error.hpp"
#include "strokeval/turing.hpp"
#include "strokeval/turing_server.hpp"
#include "support/synth.hpp"

using namespace strokeval;
using namespace strokeval::turing;

namespace {

std::vector<PoolCase> make_pool(int n) {
    std::vector<PoolCase> pool;
    std::mt19937_64 rng(99);
    auto name = [&] { return std::to_string(rng() % 1000000007) + ".png"; };
    for (int i = 0; i < n; ++i) {
        PoolCase c;
        c.case_id = "case" + std::to_string(i);
        for (auto& s : c.expert) s = name();
        for (auto& s : c.algorithm) s = name();
        pool.push_back(c);
    }
    return pool;
}

std::vector<std::string> raters(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("rater" + std::to_string(i + 1));
    return out;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

bool leaks_source(const std::string& text) {
    return text.find("source") != std::string::npos || text.find("expert") != std::string::npos ||
           text.find("algorithm") != std::string::npos || text.find("case") != std::string::npos;
}

// Scores every item with fn(source) -> (completeness, correctness).
template <class Fn>
void score_all(RatingSession& s, Fn fn) {
    for (const auto& it : s.items) {
        const auto [c, k] = fn(it.source);
        s.scores[it.item_id] = Score{c, k, "t"};
    }
}

}  // namespace

TEST_SUITE("turing_service") {

TEST_CASE("nine raters get 40 or 41 balanced items") {
    const auto pool = make_pool(60);
    const auto sessions = create_sessions(pool, raters(9), 2022);
    REQUIRE(sessions.size() == 9);
    std::set<std::string> ids;
    std::set<std::size_t> sizes;
    for (const auto& s : sessions) {
        CHECK((s.items.size() == 40 || s.items.size() == 41));
        sizes.insert(s.items.size());
        int expert = 0;
        std::set<std::string> cases;
        for (const auto& it : s.items) {
            expert += it.source == Source::Expert;
            cases.insert(it.case_id);
            CHECK(ids.insert(it.item_id).second);
        }
        const int algo = static_cast<int>(s.items.size()) - expert;
        CHECK(std::abs(expert - algo) <= 1);
        CHECK(cases.size() == s.items.size());
        CHECK(ids.insert(s.session_id).second);
    }
    CHECK(sessions[0].rater_id == "rater1");
}

TEST_CASE("balance and sizes hold over many seeds") {
    const auto pool = make_pool(41);
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        for (const auto& s : create_sessions(pool, raters(9), seed)) {
            int expert = 0;
            for (const auto& it : s.items) {
                expert += it.source == Source::Expert;
                const auto& c = *std::find_if(pool.begin(), pool.end(), [&](auto& p) { return p.case_id == it.case_id; });
                CHECK(it.slices == (it.source == Source::Expert ? c.expert : c.algorithm));
            }
            const int n = static_cast<int>(s.items.size());
            REQUIRE((n == 40 || n == 41));
            REQUIRE(std::abs(2 * expert - n) <= 1);
        }
    }
}

TEST_CASE("sessions are a pure function of pool, raters and seed") {
    auto pool = make_pool(50);
    const auto a = create_sessions(pool, raters(9), 7);
    const auto b = create_sessions(pool, raters(9), 7);
    std::reverse(pool.begin(), pool.end());
    const auto c = create_sessions(pool, raters(9), 7);
    const auto d = create_sessions(pool, raters(9), 8);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(to_json(a[i]).dump() == to_json(b[i]).dump());
        CHECK(to_json(a[i]).dump() == to_json(c[i]).dump());
    }
    CHECK(to_json(a[0]).dump() != to_json(d[0]).dump());
}

TEST_CASE("session generation errors") {
    CHECK(code_of([] { create_sessions(make_pool(40), raters(2), 1); }) == ErrorCode::InsufficientPool);
    auto pool = make_pool(45);
    for (int i = 0; i < 5; ++i) pool[static_cast<std::size_t>(i)].algorithm[1].clear();
    CHECK(code_of([&] { create_sessions(pool, raters(2), 1); }) == ErrorCode::InsufficientPool);
    CHECK(code_of([] { create_sessions(make_pool(45), std::vector<std::string>{"r", "r"}, 1); }) ==
          ErrorCode::InvalidArgument);
    CHECK(code_of([] { create_sessions(make_pool(45), std::vector<std::string>{}, 1); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("pool and session JSON round trip") {
    const auto pool = make_pool(42);
    const auto back = pool_from_json(to_json(pool));
    REQUIRE(back.size() == pool.size());
    CHECK(back[3].algorithm == pool[3].algorithm);
    auto s = create_sessions(pool, raters(1), 3)[0];
    s.scores[s.items[0].item_id] = Score{4, 5, "2026-01-01T00:00:00.000Z"};
    CHECK(to_json(session_from_json(to_json(s))).dump() == to_json(s).dump());
    CHECK(code_of([] { pool_from_json(Json{{"cases", Json::array({Json{{"case_id", "x"}}})}}); }) ==
          ErrorCode::InvalidArgument);
}

TEST_CASE("rater view is blinded") {
    auto s = create_sessions(make_pool(45), raters(1), 11)[0];
    for (std::size_t k = 0; k <= s.items.size(); ++k) {
        const auto view = rater_view(s, "/renders/");
        const auto text = view.dump();
        CHECK_FALSE(leaks_source(text));
        CHECK(view["progress"]["scored"] == k);
        if (k == s.items.size()) {
            CHECK(view["complete"] == true);
            CHECK(view["item"].is_null());
            break;
        }
        CHECK(view["item"]["item_id"] == s.items[k].item_id);
        CHECK(view["item"]["renders"].size() == 3);
        CHECK(view["item"]["renders"][2]["view"] == "sagittal");
        CHECK(view["item"]["renders"][0]["url"] == "/renders/" + s.items[k].slices[0]);
        s.scores[s.items[k].item_id] = Score{3, 3, "t"};
    }
}

TEST_CASE("store validates, audits and survives restart") {
    synth::TempDir dir;
    const auto sessions = create_sessions(make_pool(45), raters(2), 5);
    const auto& s0 = sessions[0];
    {
        Store store(dir.path());
        store.add_sessions(sessions);
        CHECK(code_of([&] { store.add_sessions({s0}); }) == ErrorCode::InvalidArgument);
        auto ack = store.submit(s0.session_id, s0.items[0].item_id, 6, 6);
        CHECK_FALSE(ack.overwritten);
        CHECK(ack.scored == 1);
        ack = store.submit(s0.session_id, s0.items[0].item_id, 2, 3);
        CHECK(ack.overwritten);
        CHECK(ack.scored == 1);
        store.submit(s0.session_id, s0.items[1].item_id, 1, 1);
        CHECK(code_of([&] { store.submit(s0.session_id, s0.items[2].item_id, 0, 3); }) == ErrorCode::OutOfRangeScore);
        CHECK(code_of([&] { store.submit(s0.session_id, s0.items[2].item_id, 3, 7); }) == ErrorCode::OutOfRangeScore);
        CHECK(code_of([&] { store.submit(s0.session_id, sessions[1].items[0].item_id, 3, 3); }) ==
              ErrorCode::UnknownItem);
        CHECK(code_of([&] { store.submit("nope", s0.items[0].item_id, 3, 3); }) == ErrorCode::UnknownSession);
        store.close(sessions[1].session_id);
        CHECK(code_of([&] { store.submit(sessions[1].session_id, sessions[1].items[0].item_id, 3, 3); }) ==
              ErrorCode::ClosedSession);
        const auto audit = store.audit();
        REQUIRE(audit.size() == 1);
        CHECK(audit[0].previous.completeness == 6);
        CHECK(audit[0].replacement.completeness == 2);
    }
    Store reopened(dir.path());
    const auto s = reopened.session(s0.session_id);
    CHECK(s.scores.size() == 2);
    CHECK(s.scores.at(s0.items[0].item_id).correctness == 3);
    CHECK(reopened.audit().size() == 1);
    CHECK(reopened.session(sessions[1].session_id).closed);
    CHECK(reopened.sequence() == 5);
}

TEST_CASE("snapshot plus journal tail replays to the same state") {
    synth::TempDir dir;
    const auto sessions = create_sessions(make_pool(45), raters(3), 9);
    std::string before;
    {
        Store store(dir.path(), 7);
        store.add_sessions(sessions);
        for (const auto& s : sessions) {
            for (std::size_t k = 0; k < 10; ++k) store.submit(s.session_id, s.items[k].item_id, 1 + k % 6, 6 - k % 6);
        }
        store.submit(sessions[0].session_id, sessions[0].items[0].item_id, 5, 5);
        CHECK(std::filesystem::exists(dir / "snapshot.json"));
        for (const auto& s : store.sessions()) before += to_json(s).dump();
    }
    {
        // torn write at the end of the journal
        std::ofstream out(dir / "journal.jsonl", std::ios::app | std::ios::binary);
        out << "{\"seq\": 99, \"type\": \"sco";
    }
    Store reopened(dir.path(), 7);
    std::string after;
    for (const auto& s : reopened.sessions()) after += to_json(s).dump();
    CHECK(after == before);
    CHECK(reopened.audit().size() == 1);
    CHECK(reopened.sequence() == 32);
}

TEST_CASE("concurrent raters") {
    synth::TempDir dir;
    const auto sessions = create_sessions(make_pool(45), raters(6), 13);
    Store store(dir.path(), 25);
    store.add_sessions(sessions);
    std::vector<std::thread> threads;
    for (const auto& s : sessions) {
        threads.emplace_back([&store, &s] {
            for (const auto& it : s.items) store.submit(s.session_id, it.item_id, 4, 4);
        });
    }
    for (auto& t : threads) t.join();
    for (const auto& s : store.sessions()) CHECK(s.complete());
    Store reopened(dir.path());
    for (const auto& s : reopened.sessions()) CHECK(s.complete());
}

TEST_CASE("report: identical scores give p = 1") {
    auto sessions = create_sessions(make_pool(45), raters(9), 17);
    for (auto& s : sessions) score_all(s, [](Source) { return std::pair{4, 5}; });
    const auto r = turing_report(sessions);
    CHECK(r.rater_count == 9);
    for (const auto& c : r.comparisons) {
        CHECK(c.rater_paired.p_value == 1.0);
        CHECK(c.item_pooled.p_value == 1.0);
    }
}

TEST_CASE("report: algorithm higher for all nine raters gives 2/512") {
    auto sessions = create_sessions(make_pool(45), raters(9), 19);
    for (auto& s : sessions) {
        score_all(s, [](Source src) { return src == Source::Expert ? std::pair{2, 3} : std::pair{4, 4}; });
    }
    const auto r = turing_report(sessions);
    for (const auto& c : r.comparisons) {
        CHECK(c.rater_paired.n_effective == 9);
        CHECK(c.rater_paired.method == stats::TestMethod::Exact);
        CHECK(c.rater_paired.p_value == doctest::Approx(2.0 / 512.0).epsilon(1e-12));
        CHECK(c.algorithm_mean > c.expert_mean);
    }
}

TEST_CASE("report uses completed sessions only") {
    auto sessions = create_sessions(make_pool(45), raters(3), 23);
    CHECK(code_of([&] { turing_report(sessions); }) == ErrorCode::NoCompletedSessions);
    score_all(sessions[0], [](Source src) { return src == Source::Expert ? std::pair{5, 5} : std::pair{3, 4}; });
    sessions[1].scores[sessions[1].items[0].item_id] = Score{6, 6, "t"};
    const auto r = turing_report(sessions);
    CHECK(r.session_count == 1);
    CHECK(r.rater_count == 1);
    CHECK(r.item_count == static_cast<std::int64_t>(sessions[0].items.size()));
    const auto e = static_cast<std::size_t>(Source::Expert);
    std::int64_t expert_items = 0;
    for (const auto& it : sessions[0].items) expert_items += it.source == Source::Expert;
    CHECK(r.distributions[e][0].counts[4] == expert_items);
    CHECK(r.raters[0].expert_mean[0] == 5.0);
    CHECK(r.raters[0].algorithm_mean[1] == 4.0);
}

TEST_CASE("study-sized replay emits p-values and boxplot data") {
    auto sessions = create_sessions(make_pool(80), raters(9), 2022);
    std::mt19937_64 rng(5);
    for (auto& s : sessions) {
        score_all(s, [&](Source src) {
            std::uniform_int_distribution<int> base(src == Source::Expert ? 2 : 3, 6);
            return std::pair{base(rng), base(rng)};
        });
    }
    const auto doc = to_json(turing_report(sessions));
    for (const char* dim : kDimensions) {
        const auto& c = doc["comparisons"][dim];
        CHECK(c["rater_paired_signed_rank"]["p_value"].get<double>() > 0.0);
        CHECK(c["rater_paired_signed_rank"]["p_value"].get<double>() <= 1.0);
        CHECK(c["item_level_pooled_rank_sum"]["p_value"].get<double>() <= 1.0);
        for (const char* src : {"expert", "algorithm"}) {
            const auto& summary = doc["distributions"][src][dim]["summary"];
            CHECK(summary["q1"].get<double>() <= summary["median"].get<double>());
            CHECK(summary["median"].get<double>() <= summary["q3"].get<double>());
        }
    }
    CHECK(doc["rater_count"] == 9);
    CHECK(doc["raters"].size() == 9);
}

TEST_CASE("HTTP API end to end") {
    synth::TempDir dir;
    std::filesystem::create_directories(dir / "renders");
    const auto pool = make_pool(45);
    for (const auto& c : pool) {
        for (const auto& f : c.expert) std::ofstream(dir / "renders" / f) << "png";
        for (const auto& f : c.algorithm) std::ofstream(dir / "renders" / f) << "png";
    }
    std::ofstream(dir / "pool.json") << to_json(pool).dump();

    ServerConfig config;
    config.port = 0;
    config.data_dir = dir / "data";
    config.render_dir = dir / "renders";
    config.pool = dir / "pool.json";
    config.admin_token = "secret";
    std::string session_id;
    {
        Server server(config);
        const int port = server.bind();
        std::thread worker([&] { server.serve(); });

        httplib::Client client("127.0.0.1", port);
        const httplib::Headers admin{{"Authorization", "Bearer secret"}};
        const std::string create = R"({"raters": ["r1", "r2"], "seed": 42})";

        CHECK(client.Post("/sessions", create, "application/json")->status == 401);
        CHECK(client.Post("/sessions", httplib::Headers{{"Authorization", "Bearer wrong"}}, create,
                          "application/json")->status == 401);
        auto res = client.Post("/sessions", admin, create, "application/json");
        REQUIRE(res);
        REQUIRE(res->status == 201);
        CHECK_FALSE(leaks_source(res->body));
        const auto created = Json::parse(res->body);
        session_id = created["sessions"][0]["session_id"].get<std::string>();

        CHECK(client.Get("/report", admin)->status == 422);
        CHECK(client.Get("/report")->status == 401);
        CHECK(client.Get("/sessions/unknown/next")->status == 404);

        std::string first_item;
        int total = 0;
        for (int k = 0;; ++k) {
            res = client.Get("/sessions/" + session_id + "/next");
            REQUIRE(res->status == 200);
            CHECK_FALSE(leaks_source(res->body));
            const auto view = Json::parse(res->body);
            if (view["complete"].get<bool>()) {
                CHECK(k == total);
                break;
            }
            total = view["progress"]["total"].get<int>();
            const auto item = view["item"]["item_id"].get<std::string>();
            if (k == 0) {
                first_item = item;
                const auto url = view["item"]["renders"][0]["url"].get<std::string>();
                const auto png = client.Get(url);
                REQUIRE(png);
                CHECK(png->status == 200);
                CHECK(png->body == "png");
                auto bad = client.Post("/sessions/" + session_id + "/scores",
                                       Json{{"item_id", item}, {"completeness", 0}, {"correctness", 3}}.dump(),
                                       "application/json");
                CHECK(bad->status == 422);
                CHECK_FALSE(leaks_source(bad->body));
                bad = client.Post("/sessions/" + session_id + "/scores",
                                  Json{{"item_id", "zzz"}, {"completeness", 3}, {"correctness", 3}}.dump(),
                                  "application/json");
                CHECK(bad->status == 404);
                bad = client.Post("/sessions/" + session_id + "/scores", "{not json", "application/json");
                CHECK(bad->status == 400);
            }
            const auto ack = client.Post("/sessions/" + session_id + "/scores",
                                         Json{{"item_id", item}, {"completeness", 6}, {"correctness", 6}}.dump(),
                                         "application/json");
            REQUIRE(ack->status == 200);
            CHECK_FALSE(leaks_source(ack->body));
            CHECK(Json::parse(ack->body)["progress"]["scored"] == k + 1);
        }
        CHECK((total == 40 || total == 41));

        res = client.Post("/sessions/" + session_id + "/scores",
                          Json{{"item_id", first_item}, {"completeness", 5}, {"correctness", 5}}.dump(),
                          "application/json");
        CHECK(Json::parse(res->body)["overwritten"] == true);

        res = client.Get("/report", admin);
        REQUIRE(res->status == 200);
        const auto report = Json::parse(res->body);
        CHECK(report["session_count"] == 1);
        CHECK(report["comparisons"]["completeness"].contains("rater_paired_signed_rank"));

        CHECK(client.Post("/sessions/" + session_id + "/close", "", "application/json")->status == 401);
        CHECK(client.Post("/sessions/" + session_id + "/close", admin, "", "application/json")->status == 200);
        res = client.Post("/sessions/" + session_id + "/scores",
                          Json{{"item_id", first_item}, {"completeness", 5}, {"correctness", 5}}.dump(),
                          "application/json");
        CHECK(res->status == 409);
        CHECK(Json::parse(client.Get("/rubric")->body)["scale"]["max"] == 6);

        server.stop();
        worker.join();
    }
    // restart: scores still there
    Store store(dir / "data");
    const auto s = store.session(session_id);
    CHECK(s.complete());
    CHECK(s.closed);
}

}
