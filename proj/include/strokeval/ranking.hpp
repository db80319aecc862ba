#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "strokeval/stats.hpp"

namespace strokeval {

enum class Metric { Dice, Avd, LesionF1, Ald };

inline constexpr std::array<Metric, 4> kMetrics{Metric::Dice, Metric::Avd, Metric::LesionF1, Metric::Ald};
inline constexpr std::size_t kMetricCount = kMetrics.size();

enum class Direction { HigherBetter, LowerBetter };

Direction direction(Metric metric) noexcept;
std::string_view metric_key(Metric metric) noexcept;  // "dsc", "avd_ml", "lesion_f1", "ald"
std::optional<Metric> metric_from_key(std::string_view key) noexcept;

// teams x cases x metrics. Missing entries are NaN and make the matrix
// incomplete; callers impute before ranking.
class MetricMatrix {
public:
    MetricMatrix() = default;
    MetricMatrix(std::vector<std::string> teams, std::vector<std::string> cases);

    const std::vector<std::string>& teams() const noexcept { return teams_; }
    const std::vector<std::string>& cases() const noexcept { return cases_; }
    std::size_t team_count() const noexcept { return teams_.size(); }
    std::size_t case_count() const noexcept { return cases_.size(); }

    double& at(std::size_t team, std::size_t kase, Metric metric) noexcept {
        return values_[offset(team, kase, metric)];
    }
    double at(std::size_t team, std::size_t kase, Metric metric) const noexcept {
        return values_[offset(team, kase, metric)];
    }

    bool complete() const noexcept;

    // IncompleteMatrix, FewerThanTwoTeams, or EmptyInput (no cases).
    void validate() const;

    // New matrix whose case k is this matrix's case indices[k].
    MetricMatrix select_cases(std::span<const std::size_t> indices) const;

private:
    std::size_t offset(std::size_t team, std::size_t kase, Metric metric) const noexcept {
        return (team * cases_.size() + kase) * kMetricCount + static_cast<std::size_t>(metric);
    }

    std::vector<std::string> teams_;
    std::vector<std::string> cases_;
    std::vector<double> values_;
};

enum class RankingScheme { RankThenAggregate, AggregateThenRank };
enum class Aggregator { Median, Mean };

std::string_view to_string(RankingScheme scheme) noexcept;
std::string_view to_string(Aggregator aggregator) noexcept;

struct RankTable {
    RankingScheme scheme = RankingScheme::RankThenAggregate;
    Aggregator aggregator = Aggregator::Median;
    std::vector<std::string> teams;
    std::vector<std::string> cases;

    // rank-then-aggregate only: team x case x metric, best = 1, ties averaged
    std::vector<double> per_case_ranks;
    // team x metric: mean rank over cases (rank-then-aggregate) or the rank
    // of the aggregated metric value (aggregate-then-rank)
    std::vector<double> metric_ranks;
    // aggregate-then-rank only: team x metric aggregated values
    std::vector<double> metric_aggregates;

    std::vector<double> scores;   // mean rank per team, lower is better
    std::vector<int> positions;   // 1-based, equal scores share a position

    double per_case_rank(std::size_t team, std::size_t kase, Metric metric) const {
        return per_case_ranks[(team * cases.size() + kase) * kMetricCount + static_cast<std::size_t>(metric)];
    }
    double metric_rank(std::size_t team, Metric metric) const {
        return metric_ranks[team * kMetricCount + static_cast<std::size_t>(metric)];
    }
};

RankTable rank_then_aggregate(const MetricMatrix& matrix);
RankTable aggregate_then_rank(const MetricMatrix& matrix, Aggregator aggregator = Aggregator::Median);
RankTable compute_ranking(const MetricMatrix& matrix, RankingScheme scheme, Aggregator aggregator = Aggregator::Median);

// Competition positions: sorted by ascending score, teams whose scores agree
// within 1e-9 share the better position ("1, 2, 3, 3, 5").
std::vector<int> positions_from_scores(std::span<const double> scores);

struct BootstrapOptions {
    RankingScheme scheme = RankingScheme::RankThenAggregate;
    Aggregator aggregator = Aggregator::Median;
    int n_boot = 1000;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct BootstrapResult {
    std::vector<std::string> teams;
    int n_boot = 0;
    std::uint64_t seed = 0;
    RankingScheme scheme = RankingScheme::RankThenAggregate;
    Aggregator aggregator = Aggregator::Median;
    std::vector<int> positions;              // n_boot x teams
    std::vector<std::int64_t> histogram;     // teams x teams, [t][p-1] = resamples placing t at p
    std::vector<double> mean_position;
    std::vector<double> sd_position;         // population sd over resamples

    int position(std::size_t resample, std::size_t team) const {
        return positions[resample * teams.size() + team];
    }
    std::int64_t count(std::size_t team, int position) const {
        return histogram[team * teams.size() + static_cast<std::size_t>(position - 1)];
    }
};

// Case indices of one bootstrap resample: n_cases draws with replacement from
// a generator seeded by (seed, resample), so any resample can be rebuilt
// independently of the others.
std::vector<std::size_t> bootstrap_indices(std::size_t n_cases, std::uint64_t seed, std::size_t resample);

BootstrapResult bootstrap_ranks(const MetricMatrix& matrix, const BootstrapOptions& options);

struct SignificanceMap {
    std::vector<std::string> teams;
    double alpha = stats::kDefaultAlpha;
    // per metric, teams x teams (row-major); diagonal p = 1
    std::array<std::vector<double>, kMetricCount> p_raw;
    std::array<std::vector<double>, kMetricCount> p_adjusted;
    std::array<std::vector<bool>, kMetricCount> reject;

    double adjusted(Metric metric, std::size_t a, std::size_t b) const {
        return p_adjusted[static_cast<std::size_t>(metric)][a * teams.size() + b];
    }
    double raw(Metric metric, std::size_t a, std::size_t b) const {
        return p_raw[static_cast<std::size_t>(metric)][a * teams.size() + b];
    }
};

// Paired signed-rank test over cases for every team pair, Benjamini-Hochberg
// adjusted within each metric.
SignificanceMap significance_map(const MetricMatrix& matrix, double alpha = stats::kDefaultAlpha);

}  // namespace strokeval
