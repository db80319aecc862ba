#pragma once

// Blinded rating study: session generation, durable score capture and the
// expert-versus-algorithm comparison.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "strokeval/stats.hpp"

namespace strokeval::turing {

using Json = nlohmann::ordered_json;

enum class Source { Expert, Algorithm };

std::string_view to_string(Source source) noexcept;

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 6;
inline constexpr int kMinItems = 40;
inline constexpr int kMaxItems = 41;

// Rendering file names for one annotation: two axial slices, one sagittal.
using SliceTriplet = std::array<std::string, 3>;
inline constexpr std::array<const char*, 3> kSliceViews{"axial", "axial", "sagittal"};

struct PoolCase {
    std::string case_id;
    SliceTriplet expert;
    SliceTriplet algorithm;
};

// {"cases": [{"case_id": ..., "expert": [a, a, s], "algorithm": [a, a, s]}]}
std::vector<PoolCase> pool_from_json(const Json& j);
Json to_json(std::span<const PoolCase> pool);

struct RatingItem {
    std::string item_id;
    std::string case_id;
    Source source = Source::Expert;
    SliceTriplet slices;
};

struct Score {
    int completeness = 0;
    int correctness = 0;
    std::string timestamp;  // UTC, ISO 8601
};

struct RatingSession {
    std::string session_id;
    std::string rater_id;
    std::vector<RatingItem> items;          // presentation order
    std::map<std::string, Score> scores;    // by item_id
    bool closed = false;

    bool complete() const noexcept { return !items.empty() && scores.size() == items.size(); }
    const RatingItem* find_item(const std::string& item_id) const noexcept;
};

struct SessionOptions {
    int min_items = kMinItems;
    int max_items = kMaxItems;
};

// One session per rater. Each session draws 40 or 41 distinct cases, shows
// each with exactly one annotation source (expert/algorithm counts within
// one of each other) in random order. Identifiers are random hex tokens.
// A pure function of (pool, raters, seed). InsufficientPool when fewer
// usable cases than the session size; InvalidArgument for empty or
// duplicate rater ids.
std::vector<RatingSession> create_sessions(std::span<const PoolCase> pool, std::span<const std::string> raters,
                                           std::uint64_t seed, const SessionOptions& options = {});

// Full session state including sources; never sent to raters.
Json to_json(const RatingSession& s);
RatingSession session_from_json(const Json& j);

// Rater-facing payload for the next unscored item. `render_prefix` is
// prepended to every rendering file name. Carries no source information.
Json rater_view(const RatingSession& s, const std::string& render_prefix);

struct ScoreAck {
    std::string session_id;
    std::string item_id;
    bool overwritten = false;
    std::int64_t scored = 0;
    std::int64_t total = 0;
};

struct AuditEntry {
    std::string session_id;
    std::string item_id;
    Score previous;
    Score replacement;
};

// Append-only JSON-lines journal plus periodic snapshots. Every mutation is
// written and fsynced before the call returns; opening a directory replays
// the latest snapshot and the journal tail.
class Store {
public:
    explicit Store(std::filesystem::path data_dir, std::int64_t snapshot_every = 200);

    // Registers new sessions. InvalidArgument when an id is already taken.
    void add_sessions(const std::vector<RatingSession>& sessions);

    ScoreAck submit(const std::string& session_id, const std::string& item_id, int completeness, int correctness);
    void close(const std::string& session_id);

    // UnknownSession when absent.
    RatingSession session(const std::string& session_id) const;
    std::vector<RatingSession> sessions() const;  // sorted by session_id
    std::vector<AuditEntry> audit() const;
    std::int64_t sequence() const;

    void snapshot();

private:
    void append(const Json& event);
    void apply(const Json& event);
    void replay();

    std::filesystem::path dir_;
    std::int64_t snapshot_every_;
    mutable std::shared_mutex state_mutex_;
    std::mutex journal_mutex_;
    std::map<std::string, RatingSession> sessions_;
    std::vector<AuditEntry> audit_;
    std::int64_t seq_ = 0;
    std::int64_t since_snapshot_ = 0;
};

struct ScoreDistribution {
    std::array<std::int64_t, kMaxScore> counts{};  // counts[s - 1]
    std::optional<stats::Summary> summary;
};

struct RaterSummary {
    std::string rater_id;
    std::int64_t expert_items = 0;
    std::int64_t algorithm_items = 0;
    // [0] completeness, [1] correctness
    std::array<double, 2> expert_mean{};
    std::array<double, 2> algorithm_mean{};
};

struct DimensionComparison {
    // Paired over raters: algorithm mean minus expert mean per rater.
    stats::TestResult rater_paired;
    // Unpaired over all scored items, pooled across raters.
    stats::TestResult item_pooled;
    double expert_mean = 0.0;
    double algorithm_mean = 0.0;
};

struct TuringReport {
    std::int64_t session_count = 0;
    std::int64_t rater_count = 0;
    std::int64_t item_count = 0;
    // [source][dimension]
    std::array<std::array<ScoreDistribution, 2>, 2> distributions;
    std::array<DimensionComparison, 2> comparisons;
    std::vector<RaterSummary> raters;
};

inline constexpr std::array<const char*, 2> kDimensions{"completeness", "correctness"};

// Uses completed sessions only; a rater with several completed sessions
// contributes one pair of means over all of them. NoCompletedSessions when
// none is complete.
TuringReport turing_report(std::span<const RatingSession> sessions);
Json to_json(const TuringReport& r);

}  // namespace strokeval::turing
