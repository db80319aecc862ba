#include "strokeval/turing.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "strokeval/error.hpp"

namespace strokeval::turing {

namespace {

std::string hex_token(std::mt19937_64& rng, int digits) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    std::uint64_t bits = 0;
    for (int i = 0; i < digits; ++i) {
        if (i % 16 == 0) bits = rng();
        out += kHex[bits & 0xF];
        bits >>= 4;
    }
    return out;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

Source source_from_string(const std::string& s) {
    if (s == "expert") return Source::Expert;
    if (s == "algorithm") return Source::Algorithm;
    throw Error(ErrorCode::InvalidArgument, "unknown source '" + s + "'");
}

SliceTriplet triplet_from_json(const Json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) {
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " must list three renderings");
    }
    SliceTriplet t;
    for (std::size_t i = 0; i < 3; ++i) t[i] = j[i].get<std::string>();
    return t;
}

bool usable(const PoolCase& c) {
    if (c.case_id.empty()) return false;
    for (const auto& s : c.expert)
        if (s.empty()) return false;
    for (const auto& s : c.algorithm)
        if (s.empty()) return false;
    return true;
}

Json score_json(const Score& s) {
    return Json{{"completeness", s.completeness}, {"correctness", s.correctness}, {"timestamp", s.timestamp}};
}

Score score_from_json(const Json& j) {
    return Score{j.at("completeness").get<int>(), j.at("correctness").get<int>(), j.at("timestamp").get<std::string>()};
}

void write_all(int fd, const std::string& data, const std::filesystem::path& path) {
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
        const auto n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::Io, "write failed on " + path.string());
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

void durable_write(const std::filesystem::path& path, const std::string& data, bool append) {
    const int flags = O_WRONLY | O_CREAT | O_CLOEXEC | (append ? O_APPEND : O_TRUNC);
    const int fd = ::open(path.c_str(), flags, 0644);
    if (fd < 0) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        write_all(fd, data, path);
        if (::fsync(fd) != 0) throw Error(ErrorCode::Io, "fsync failed on " + path.string());
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

std::string_view to_string(Source source) noexcept {
    return source == Source::Expert ? "expert" : "algorithm";
}

std::vector<PoolCase> pool_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("cases") || !j["cases"].is_array()) {
        throw Error(ErrorCode::InvalidArgument, "pool must be an object with a 'cases' array");
    }
    std::vector<PoolCase> out;
    try {
        for (const auto& c : j["cases"]) {
            out.push_back({c.at("case_id").get<std::string>(), triplet_from_json(c.at("expert"), "expert"),
                           triplet_from_json(c.at("algorithm"), "algorithm")});
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed pool: ") + e.what());
    }
    return out;
}

Json to_json(std::span<const PoolCase> pool) {
    Json cases = Json::array();
    for (const auto& c : pool) {
        cases.push_back(Json{{"case_id", c.case_id}, {"expert", c.expert}, {"algorithm", c.algorithm}});
    }
    return Json{{"cases", cases}};
}

const RatingItem* RatingSession::find_item(const std::string& item_id) const noexcept {
    for (const auto& it : items)
        if (it.item_id == item_id) return &it;
    return nullptr;
}

std::vector<RatingSession> create_sessions(std::span<const PoolCase> pool, std::span<const std::string> raters,
                                           std::uint64_t seed, const SessionOptions& options) {
    if (options.min_items < 1 || options.max_items < options.min_items) {
        throw Error(ErrorCode::InvalidArgument, "invalid session size range");
    }
    if (raters.empty()) throw Error(ErrorCode::InvalidArgument, "no raters");
    std::set<std::string> seen_raters;
    for (const auto& r : raters) {
        if (r.empty()) throw Error(ErrorCode::InvalidArgument, "empty rater id");
        if (!seen_raters.insert(r).second) throw Error(ErrorCode::InvalidArgument, "duplicate rater id '" + r + "'");
    }
    std::vector<const PoolCase*> cases;
    std::set<std::string> seen_cases;
    for (const auto& c : pool) {
        if (!seen_cases.insert(c.case_id).second) {
            throw Error(ErrorCode::InvalidArgument, "duplicate case '" + c.case_id + "' in pool");
        }
        if (usable(c)) cases.push_back(&c);
    }
    std::sort(cases.begin(), cases.end(), [](auto* a, auto* b) { return a->case_id < b->case_id; });
    if (cases.size() < static_cast<std::size_t>(options.max_items)) {
        throw Error(ErrorCode::InsufficientPool, std::to_string(cases.size()) + " usable cases, sessions need up to " +
                                                     std::to_string(options.max_items));
    }

    std::vector<RatingSession> out;
    std::set<std::string> ids;
    for (std::size_t r = 0; r < raters.size(); ++r) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(r), 0x7a11u};
        std::mt19937_64 rng(seq);
        const int size = std::uniform_int_distribution<int>(options.min_items, options.max_items)(rng);

        std::vector<const PoolCase*> chosen = cases;
        std::shuffle(chosen.begin(), chosen.end(), rng);
        chosen.resize(static_cast<std::size_t>(size));

        const int half = size / 2;
        int n_expert = half;
        if (size % 2 == 1 && std::bernoulli_distribution(0.5)(rng)) n_expert = half + 1;
        std::vector<Source> sources(static_cast<std::size_t>(size), Source::Algorithm);
        std::fill_n(sources.begin(), n_expert, Source::Expert);
        std::shuffle(sources.begin(), sources.end(), rng);

        RatingSession s;
        do {
            s.session_id = "s" + hex_token(rng, 12);
        } while (!ids.insert(s.session_id).second);
        s.rater_id = raters[r];
        for (int k = 0; k < size; ++k) {
            RatingItem item;
            do {
                item.item_id = "i" + hex_token(rng, 16);
            } while (!ids.insert(item.item_id).second);
            const auto& c = *chosen[static_cast<std::size_t>(k)];
            item.case_id = c.case_id;
            item.source = sources[static_cast<std::size_t>(k)];
            item.slices = item.source == Source::Expert ? c.expert : c.algorithm;
            s.items.push_back(std::move(item));
        }
        out.push_back(std::move(s));
    }
    return out;
}

Json to_json(const RatingSession& s) {
    Json items = Json::array();
    for (const auto& it : s.items) {
        items.push_back(Json{{"item_id", it.item_id},
                             {"case_id", it.case_id},
                             {"source", std::string(to_string(it.source))},
                             {"slices", it.slices}});
    }
    Json scores = Json::object();
    for (const auto& [id, sc] : s.scores) scores[id] = score_json(sc);
    return Json{{"session_id", s.session_id},
                {"rater_id", s.rater_id},
                {"closed", s.closed},
                {"items", items},
                {"scores", scores}};
}

RatingSession session_from_json(const Json& j) {
    try {
        RatingSession s;
        s.session_id = j.at("session_id").get<std::string>();
        s.rater_id = j.at("rater_id").get<std::string>();
        s.closed = j.value("closed", false);
        for (const auto& it : j.at("items")) {
            s.items.push_back({it.at("item_id").get<std::string>(), it.at("case_id").get<std::string>(),
                               source_from_string(it.at("source").get<std::string>()),
                               triplet_from_json(it.at("slices"), "slices")});
        }
        if (j.contains("scores")) {
            for (const auto& [id, sc] : j["scores"].items()) s.scores[id] = score_from_json(sc);
        }
        return s;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed session: ") + e.what());
    }
}

Json rater_view(const RatingSession& s, const std::string& render_prefix) {
    const auto total = static_cast<std::int64_t>(s.items.size());
    const auto scored = static_cast<std::int64_t>(s.scores.size());
    Json view{{"session_id", s.session_id},
              {"progress", Json{{"scored", scored}, {"total", total}}},
              {"closed", s.closed}};
    const RatingItem* next = nullptr;
    std::int64_t position = 0;
    for (const auto& it : s.items) {
        ++position;
        if (!s.scores.contains(it.item_id)) {
            next = &it;
            break;
        }
    }
    view["complete"] = next == nullptr;
    if (!next || s.closed) {
        view["item"] = nullptr;
        return view;
    }
    Json renders = Json::array();
    for (std::size_t k = 0; k < 3; ++k) {
        renders.push_back(Json{{"view", kSliceViews[k]}, {"url", render_prefix + next->slices[k]}});
    }
    view["item"] = Json{{"item_id", next->item_id}, {"position", position}, {"renders", renders}};
    return view;
}

// ---------------------------------------------------------------------------

Store::Store(std::filesystem::path data_dir, std::int64_t snapshot_every)
    : dir_(std::move(data_dir)), snapshot_every_(snapshot_every) {
    std::filesystem::create_directories(dir_);
    replay();
}

void Store::replay() {
    std::int64_t base = 0;
    const auto snap_path = dir_ / "snapshot.json";
    if (std::filesystem::exists(snap_path)) {
        std::ifstream in(snap_path, std::ios::binary);
        Json snap;
        try {
            snap = Json::parse(in);
            base = snap.at("seq").get<std::int64_t>();
            for (const auto& s : snap.at("sessions")) {
                auto session = session_from_json(s);
                sessions_[session.session_id] = std::move(session);
            }
            for (const auto& a : snap.at("audit")) {
                audit_.push_back({a.at("session_id").get<std::string>(), a.at("item_id").get<std::string>(),
                                  score_from_json(a.at("previous")), score_from_json(a.at("replacement"))});
            }
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::Io, "corrupt snapshot " + snap_path.string() + ": " + e.what());
        }
    }
    seq_ = base;
    const auto journal = dir_ / "journal.jsonl";
    std::ifstream in(journal, std::ios::binary);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    for (std::size_t k = 0; k < lines.size(); ++k) {
        if (lines[k].empty()) continue;
        Json event;
        try {
            event = Json::parse(lines[k]);
        } catch (const Json::exception&) {
            // a torn final line is a write that was never acknowledged
            if (k + 1 == lines.size()) break;
            throw Error(ErrorCode::Io, "corrupt journal line " + std::to_string(k + 1));
        }
        const auto seq = event.at("seq").get<std::int64_t>();
        if (seq <= base) continue;
        apply(event);
        seq_ = seq;
        ++since_snapshot_;
    }
}

void Store::apply(const Json& event) {
    const auto type = event.at("type").get<std::string>();
    if (type == "sessions") {
        for (const auto& s : event.at("sessions")) {
            auto session = session_from_json(s);
            sessions_[session.session_id] = std::move(session);
        }
    } else if (type == "score") {
        auto& s = sessions_.at(event.at("session_id").get<std::string>());
        const auto item = event.at("item_id").get<std::string>();
        const Score score = score_from_json(event);
        if (const auto it = s.scores.find(item); it != s.scores.end()) {
            audit_.push_back({s.session_id, item, it->second, score});
            it->second = score;
        } else {
            s.scores[item] = score;
        }
    } else if (type == "close") {
        sessions_.at(event.at("session_id").get<std::string>()).closed = true;
    } else {
        throw Error(ErrorCode::Io, "unknown journal event '" + type + "'");
    }
}

void Store::append(const Json& event) {
    durable_write(dir_ / "journal.jsonl", event.dump() + "\n", true);
    {
        std::unique_lock lock(state_mutex_);
        apply(event);
        seq_ = event.at("seq").get<std::int64_t>();
        ++since_snapshot_;
    }
    if (snapshot_every_ > 0 && since_snapshot_ >= snapshot_every_) snapshot();
}

void Store::add_sessions(const std::vector<RatingSession>& sessions) {
    std::lock_guard journal(journal_mutex_);
    Json list = Json::array();
    {
        std::shared_lock lock(state_mutex_);
        std::set<std::string> ids;
        for (const auto& s : sessions) {
            if (sessions_.contains(s.session_id) || !ids.insert(s.session_id).second) {
                throw Error(ErrorCode::InvalidArgument, "session '" + s.session_id + "' already exists");
            }
            list.push_back(to_json(s));
        }
    }
    append(Json{{"seq", seq_ + 1}, {"type", "sessions"}, {"sessions", list}});
}

ScoreAck Store::submit(const std::string& session_id, const std::string& item_id, int completeness,
                       int correctness) {
    std::lock_guard journal(journal_mutex_);
    ScoreAck ack{session_id, item_id};
    {
        std::shared_lock lock(state_mutex_);
        const auto it = sessions_.find(session_id);
        if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + session_id + "'");
        const auto& s = it->second;
        if (s.closed) throw Error(ErrorCode::ClosedSession, "session '" + session_id + "' is closed");
        if (!s.find_item(item_id)) {
            throw Error(ErrorCode::UnknownItem, "item '" + item_id + "' is not part of session '" + session_id + "'");
        }
        for (const int v : {completeness, correctness}) {
            if (v < kMinScore || v > kMaxScore) {
                throw Error(ErrorCode::OutOfRangeScore, "scores must be integers 1-6, got " + std::to_string(v));
            }
        }
        ack.overwritten = s.scores.contains(item_id);
        ack.total = static_cast<std::int64_t>(s.items.size());
        ack.scored = static_cast<std::int64_t>(s.scores.size()) + (ack.overwritten ? 0 : 1);
    }
    append(Json{{"seq", seq_ + 1},
                {"type", "score"},
                {"session_id", session_id},
                {"item_id", item_id},
                {"completeness", completeness},
                {"correctness", correctness},
                {"timestamp", utc_now()}});
    return ack;
}

void Store::close(const std::string& session_id) {
    std::lock_guard journal(journal_mutex_);
    {
        std::shared_lock lock(state_mutex_);
        const auto it = sessions_.find(session_id);
        if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + session_id + "'");
        if (it->second.closed) return;
    }
    append(Json{{"seq", seq_ + 1}, {"type", "close"}, {"session_id", session_id}});
}

RatingSession Store::session(const std::string& session_id) const {
    std::shared_lock lock(state_mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + session_id + "'");
    return it->second;
}

std::vector<RatingSession> Store::sessions() const {
    std::shared_lock lock(state_mutex_);
    std::vector<RatingSession> out;
    for (const auto& [_, s] : sessions_) out.push_back(s);
    return out;
}

std::vector<AuditEntry> Store::audit() const {
    std::shared_lock lock(state_mutex_);
    return audit_;
}

std::int64_t Store::sequence() const {
    std::shared_lock lock(state_mutex_);
    return seq_;
}

void Store::snapshot() {
    Json snap;
    {
        std::shared_lock lock(state_mutex_);
        Json sessions = Json::array();
        for (const auto& [_, s] : sessions_) sessions.push_back(to_json(s));
        Json audit = Json::array();
        for (const auto& a : audit_) {
            audit.push_back(Json{{"session_id", a.session_id},
                                 {"item_id", a.item_id},
                                 {"previous", score_json(a.previous)},
                                 {"replacement", score_json(a.replacement)}});
        }
        snap = Json{{"seq", seq_}, {"sessions", sessions}, {"audit", audit}};
    }
    const auto tmp = dir_ / "snapshot.json.tmp";
    durable_write(tmp, snap.dump() + "\n", false);
    std::filesystem::rename(tmp, dir_ / "snapshot.json");
    std::unique_lock lock(state_mutex_);
    since_snapshot_ = 0;
}

// ---------------------------------------------------------------------------

TuringReport turing_report(std::span<const RatingSession> sessions) {
    TuringReport r;
    // scores[source][dimension]
    std::array<std::array<std::vector<double>, 2>, 2> pooled;
    std::map<std::string, std::array<std::array<std::vector<double>, 2>, 2>> by_rater;
    for (const auto& s : sessions) {
        if (!s.complete()) continue;
        ++r.session_count;
        auto& mine = by_rater[s.rater_id];
        for (const auto& it : s.items) {
            const auto& sc = s.scores.at(it.item_id);
            const auto src = static_cast<std::size_t>(it.source);
            const std::array<int, 2> v{sc.completeness, sc.correctness};
            for (std::size_t d = 0; d < 2; ++d) {
                pooled[src][d].push_back(v[d]);
                mine[src][d].push_back(v[d]);
                ++r.distributions[src][d].counts[static_cast<std::size_t>(v[d] - 1)];
            }
            ++r.item_count;
        }
    }
    if (r.session_count == 0) throw Error(ErrorCode::NoCompletedSessions, "no rating session is complete");
    r.rater_count = static_cast<std::int64_t>(by_rater.size());

    for (std::size_t src = 0; src < 2; ++src) {
        for (std::size_t d = 0; d < 2; ++d) {
            if (!pooled[src][d].empty()) r.distributions[src][d].summary = stats::summarize(pooled[src][d]);
        }
    }

    std::array<std::vector<double>, 2> expert_means, algorithm_means;
    const auto e = static_cast<std::size_t>(Source::Expert);
    const auto a = static_cast<std::size_t>(Source::Algorithm);
    for (const auto& [rater, scores] : by_rater) {
        RaterSummary rs;
        rs.rater_id = rater;
        rs.expert_items = static_cast<std::int64_t>(scores[e][0].size());
        rs.algorithm_items = static_cast<std::int64_t>(scores[a][0].size());
        for (std::size_t d = 0; d < 2; ++d) {
            rs.expert_mean[d] = mean(scores[e][d]);
            rs.algorithm_mean[d] = mean(scores[a][d]);
            if (rs.expert_items > 0 && rs.algorithm_items > 0) {
                expert_means[d].push_back(rs.expert_mean[d]);
                algorithm_means[d].push_back(rs.algorithm_mean[d]);
            }
        }
        r.raters.push_back(rs);
    }

    for (std::size_t d = 0; d < 2; ++d) {
        auto& c = r.comparisons[d];
        c.expert_mean = mean(pooled[e][d]);
        c.algorithm_mean = mean(pooled[a][d]);
        c.rater_paired = stats::signed_rank_test(algorithm_means[d], expert_means[d]);
        if (!pooled[e][d].empty() && !pooled[a][d].empty()) {
            c.item_pooled = stats::rank_sum_test(pooled[a][d], pooled[e][d]);
        }
    }
    return r;
}

Json to_json(const TuringReport& r) {
    auto summary_json = [](const std::optional<stats::Summary>& s) -> Json {
        if (!s) return nullptr;
        return Json{{"n", s->n},    {"median", s->median}, {"q1", s->q1},     {"q3", s->q3},   {"iqr", s->iqr},
                    {"p5", s->p5},  {"p95", s->p95},       {"mean", s->mean}, {"min", s->min}, {"max", s->max}};
    };
    auto test_json = [](const stats::TestResult& t) {
        return Json{{"statistic", t.statistic},
                    {"p_value", t.p_value},
                    {"n_effective", t.n_effective},
                    {"method", std::string(stats::to_string(t.method))}};
    };
    Json doc{{"schema", "strokeval.turing_report/1"},
             {"session_count", r.session_count},
             {"rater_count", r.rater_count},
             {"item_count", r.item_count}};
    Json dists = Json::object();
    for (const Source src : {Source::Expert, Source::Algorithm}) {
        Json per = Json::object();
        for (std::size_t d = 0; d < 2; ++d) {
            const auto& dist = r.distributions[static_cast<std::size_t>(src)][d];
            per[kDimensions[d]] = Json{{"counts", dist.counts}, {"summary", summary_json(dist.summary)}};
        }
        dists[std::string(to_string(src))] = per;
    }
    doc["distributions"] = dists;
    Json comps = Json::object();
    for (std::size_t d = 0; d < 2; ++d) {
        const auto& c = r.comparisons[d];
        comps[kDimensions[d]] = Json{{"expert_mean", c.expert_mean},
                                     {"algorithm_mean", c.algorithm_mean},
                                     {"rater_paired_signed_rank", test_json(c.rater_paired)},
                                     {"item_level_pooled_rank_sum", test_json(c.item_pooled)}};
    }
    doc["comparisons"] = comps;
    Json raters = Json::array();
    for (const auto& rs : r.raters) {
        raters.push_back(Json{{"rater_id", rs.rater_id},
                              {"expert_items", rs.expert_items},
                              {"algorithm_items", rs.algorithm_items},
                              {"expert_mean", Json{{"completeness", rs.expert_mean[0]}, {"correctness", rs.expert_mean[1]}}},
                              {"algorithm_mean",
                               Json{{"completeness", rs.algorithm_mean[0]}, {"correctness", rs.algorithm_mean[1]}}}});
    }
    doc["raters"] = raters;
    return doc;
}

}  // namespace strokeval::turing
