#include "strokeval/ranking.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "strokeval/error.hpp"

namespace strokeval {

namespace {

constexpr double kScoreTieTolerance = 1e-9;

// Rank key where smaller is better.
double oriented(double value, Metric metric) {
    return direction(metric) == Direction::HigherBetter ? -value : value;
}

double aggregate(std::vector<double>& values, Aggregator aggregator) {
    if (aggregator == Aggregator::Mean) {
        return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }
    return stats::percentile(values, 50.0);
}

// Uniform draw in [0, n) that only relies on the engine's specified output,
// so resamples are identical across standard libraries.
std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return static_cast<std::size_t>(r % bound);
}

}  // namespace

Direction direction(Metric metric) noexcept {
    switch (metric) {
        case Metric::Dice:
        case Metric::LesionF1: return Direction::HigherBetter;
        case Metric::Avd:
        case Metric::Ald: return Direction::LowerBetter;
    }
    return Direction::HigherBetter;
}

std::string_view metric_key(Metric metric) noexcept {
    switch (metric) {
        case Metric::Dice: return "dsc";
        case Metric::Avd: return "avd_ml";
        case Metric::LesionF1: return "lesion_f1";
        case Metric::Ald: return "ald";
    }
    return "";
}

std::optional<Metric> metric_from_key(std::string_view key) noexcept {
    for (const Metric m : kMetrics) {
        if (metric_key(m) == key) return m;
    }
    return std::nullopt;
}

std::string_view to_string(RankingScheme scheme) noexcept {
    return scheme == RankingScheme::RankThenAggregate ? "rank-then-aggregate" : "aggregate-then-rank";
}

std::string_view to_string(Aggregator aggregator) noexcept {
    return aggregator == Aggregator::Median ? "median" : "mean";
}

MetricMatrix::MetricMatrix(std::vector<std::string> teams, std::vector<std::string> cases)
    : teams_(std::move(teams)),
      cases_(std::move(cases)),
      values_(teams_.size() * cases_.size() * kMetricCount, std::numeric_limits<double>::quiet_NaN()) {}

bool MetricMatrix::complete() const noexcept {
    return std::none_of(values_.begin(), values_.end(), [](double v) { return !std::isfinite(v); });
}

void MetricMatrix::validate() const {
    if (teams_.size() < 2) throw Error(ErrorCode::FewerThanTwoTeams, "ranking needs at least two teams");
    if (cases_.empty()) throw Error(ErrorCode::EmptyInput, "ranking needs at least one case");
    for (std::size_t t = 0; t < teams_.size(); ++t) {
        for (std::size_t c = 0; c < cases_.size(); ++c) {
            for (const Metric m : kMetrics) {
                if (!std::isfinite(at(t, c, m))) {
                    throw Error(ErrorCode::IncompleteMatrix, "missing " + std::string(metric_key(m)) + " for team '" +
                                                                 teams_[t] + "', case '" + cases_[c] + "'");
                }
            }
        }
    }
}

MetricMatrix MetricMatrix::select_cases(std::span<const std::size_t> indices) const {
    std::vector<std::string> picked;
    picked.reserve(indices.size());
    for (const auto i : indices) picked.push_back(cases_.at(i));
    MetricMatrix out(teams_, std::move(picked));
    for (std::size_t t = 0; t < teams_.size(); ++t) {
        for (std::size_t k = 0; k < indices.size(); ++k) {
            for (const Metric m : kMetrics) out.at(t, k, m) = at(t, indices[k], m);
        }
    }
    return out;
}

std::vector<int> positions_from_scores(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<int> positions(scores.size(), 0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (k > 0 && std::abs(scores[order[k]] - scores[order[k - 1]]) <= kScoreTieTolerance) {
            positions[order[k]] = positions[order[k - 1]];
        } else {
            positions[order[k]] = static_cast<int>(k + 1);
        }
    }
    return positions;
}

RankTable rank_then_aggregate(const MetricMatrix& matrix) {
    matrix.validate();
    const std::size_t nt = matrix.team_count(), nc = matrix.case_count();
    RankTable table;
    table.scheme = RankingScheme::RankThenAggregate;
    table.teams = matrix.teams();
    table.cases = matrix.cases();
    table.per_case_ranks.assign(nt * nc * kMetricCount, 0.0);
    table.metric_ranks.assign(nt * kMetricCount, 0.0);

    std::vector<double> column(nt);
    for (std::size_t c = 0; c < nc; ++c) {
        for (const Metric m : kMetrics) {
            for (std::size_t t = 0; t < nt; ++t) column[t] = oriented(matrix.at(t, c, m), m);
            const auto ranks = stats::average_ranks(column);
            for (std::size_t t = 0; t < nt; ++t) {
                table.per_case_ranks[(t * nc + c) * kMetricCount + static_cast<std::size_t>(m)] = ranks[t];
            }
        }
    }
    table.scores.assign(nt, 0.0);
    for (std::size_t t = 0; t < nt; ++t) {
        double total = 0.0;
        for (const Metric m : kMetrics) {
            double per_metric = 0.0;
            for (std::size_t c = 0; c < nc; ++c) per_metric += table.per_case_rank(t, c, m);
            table.metric_ranks[t * kMetricCount + static_cast<std::size_t>(m)] = per_metric / static_cast<double>(nc);
            total += per_metric;
        }
        table.scores[t] = total / static_cast<double>(nc * kMetricCount);
    }
    table.positions = positions_from_scores(table.scores);
    return table;
}

RankTable aggregate_then_rank(const MetricMatrix& matrix, Aggregator aggregator) {
    matrix.validate();
    const std::size_t nt = matrix.team_count(), nc = matrix.case_count();
    RankTable table;
    table.scheme = RankingScheme::AggregateThenRank;
    table.aggregator = aggregator;
    table.teams = matrix.teams();
    table.cases = matrix.cases();
    table.metric_aggregates.assign(nt * kMetricCount, 0.0);
    table.metric_ranks.assign(nt * kMetricCount, 0.0);

    std::vector<double> values(nc);
    for (std::size_t t = 0; t < nt; ++t) {
        for (const Metric m : kMetrics) {
            for (std::size_t c = 0; c < nc; ++c) values[c] = matrix.at(t, c, m);
            table.metric_aggregates[t * kMetricCount + static_cast<std::size_t>(m)] = aggregate(values, aggregator);
        }
    }
    std::vector<double> column(nt);
    for (const Metric m : kMetrics) {
        for (std::size_t t = 0; t < nt; ++t) {
            column[t] = oriented(table.metric_aggregates[t * kMetricCount + static_cast<std::size_t>(m)], m);
        }
        const auto ranks = stats::average_ranks(column);
        for (std::size_t t = 0; t < nt; ++t) table.metric_ranks[t * kMetricCount + static_cast<std::size_t>(m)] = ranks[t];
    }
    table.scores.assign(nt, 0.0);
    for (std::size_t t = 0; t < nt; ++t) {
        double total = 0.0;
        for (const Metric m : kMetrics) total += table.metric_rank(t, m);
        table.scores[t] = total / static_cast<double>(kMetricCount);
    }
    table.positions = positions_from_scores(table.scores);
    return table;
}

RankTable compute_ranking(const MetricMatrix& matrix, RankingScheme scheme, Aggregator aggregator) {
    return scheme == RankingScheme::RankThenAggregate ? rank_then_aggregate(matrix)
                                                      : aggregate_then_rank(matrix, aggregator);
}

std::vector<std::size_t> bootstrap_indices(std::size_t n_cases, std::uint64_t seed, std::size_t resample) {
    if (n_cases == 0) throw Error(ErrorCode::EmptyInput, "cannot resample zero cases");
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(resample), static_cast<std::uint32_t>(resample >> 32)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> out(n_cases);
    for (auto& i : out) i = draw_index(rng, n_cases);
    return out;
}

BootstrapResult bootstrap_ranks(const MetricMatrix& matrix, const BootstrapOptions& options) {
    matrix.validate();
    if (options.n_boot < 1) throw Error(ErrorCode::InvalidArgument, "n_boot must be at least 1");
    const std::size_t nt = matrix.team_count();
    const auto n_boot = static_cast<std::size_t>(options.n_boot);

    BootstrapResult out;
    out.teams = matrix.teams();
    out.n_boot = options.n_boot;
    out.seed = options.seed;
    out.scheme = options.scheme;
    out.aggregator = options.aggregator;
    out.positions.assign(n_boot * nt, 0);

    // each resample writes its own row, so scheduling cannot change the result
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (std::size_t b = next++; b < n_boot; b = next++) {
            const auto idx = bootstrap_indices(matrix.case_count(), options.seed, b);
            const auto table = compute_ranking(matrix.select_cases(idx), options.scheme, options.aggregator);
            std::copy(table.positions.begin(), table.positions.end(), out.positions.begin() + static_cast<std::ptrdiff_t>(b * nt));
        }
    };
    const int workers = std::max(1, std::min<int>(options.workers, options.n_boot));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    out.histogram.assign(nt * nt, 0);
    out.mean_position.assign(nt, 0.0);
    out.sd_position.assign(nt, 0.0);
    for (std::size_t b = 0; b < n_boot; ++b) {
        for (std::size_t t = 0; t < nt; ++t) {
            const int p = out.position(b, t);
            ++out.histogram[t * nt + static_cast<std::size_t>(p - 1)];
            out.mean_position[t] += p;
        }
    }
    for (std::size_t t = 0; t < nt; ++t) {
        out.mean_position[t] /= static_cast<double>(n_boot);
        double ss = 0.0;
        for (std::size_t b = 0; b < n_boot; ++b) {
            const double d = out.position(b, t) - out.mean_position[t];
            ss += d * d;
        }
        out.sd_position[t] = std::sqrt(ss / static_cast<double>(n_boot));
    }
    return out;
}

SignificanceMap significance_map(const MetricMatrix& matrix, double alpha) {
    matrix.validate();
    const std::size_t nt = matrix.team_count(), nc = matrix.case_count();
    SignificanceMap out;
    out.teams = matrix.teams();
    out.alpha = alpha;
    std::vector<double> diffs(nc);
    for (const Metric m : kMetrics) {
        const auto mi = static_cast<std::size_t>(m);
        auto& raw = out.p_raw[mi];
        auto& adj = out.p_adjusted[mi];
        auto& rej = out.reject[mi];
        raw.assign(nt * nt, 1.0);
        adj.assign(nt * nt, 1.0);
        rej.assign(nt * nt, false);

        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        std::vector<double> family;
        for (std::size_t a = 0; a < nt; ++a) {
            for (std::size_t b = a + 1; b < nt; ++b) {
                for (std::size_t c = 0; c < nc; ++c) diffs[c] = matrix.at(a, c, m) - matrix.at(b, c, m);
                pairs.emplace_back(a, b);
                family.push_back(stats::signed_rank_test(diffs).p_value);
            }
        }
        const auto bh = stats::benjamini_hochberg(family, alpha);
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            const auto [a, b] = pairs[k];
            raw[a * nt + b] = raw[b * nt + a] = family[k];
            adj[a * nt + b] = adj[b * nt + a] = bh.adjusted[k];
            rej[a * nt + b] = rej[b * nt + a] = bh.reject[k];
        }
    }
    return out;
}

}  // namespace strokeval
