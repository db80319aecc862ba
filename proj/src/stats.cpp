#include "strokeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "strokeval/error.hpp"

namespace strokeval::stats {

namespace {

void require_non_empty(std::span<const double> v, const char* what) {
    if (v.empty()) throw Error(ErrorCode::EmptyInput, std::string(what) + " is empty");
}

// sum over tie groups of (t^3 - t)
double tie_term(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double term = 0.0;
    for (std::size_t i = 0; i < sorted.size();) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i);
        term += t * t * t - t;
        i = j;
    }
    return term;
}

// keeps the O(m * N^2) subset-sum enumeration bounded
constexpr std::size_t kMaxExactRankSumSize = 1000;

double two_sided_from_tails(double lower, double upper) { return std::min(1.0, 2.0 * std::min(lower, upper)); }

}  // namespace

std::string_view to_string(TestMethod method) {
    return method == TestMethod::Exact ? "exact" : "normal-approximation";
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
        // positions i..j-1 hold ranks i+1..j
        const double avg = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
        i = j;
    }
    return ranks;
}

TestResult signed_rank_test(std::span<const double> diffs, const SignedRankOptions& options) {
    require_non_empty(diffs, "signed-rank input");
    std::vector<double> nonzero;
    for (const double d : diffs) {
        if (std::isnan(d)) throw Error(ErrorCode::InvalidArgument, "NaN difference");
        if (d != 0.0) nonzero.push_back(d);
    }
    TestResult result;
    result.n_effective = static_cast<std::int64_t>(nonzero.size());
    const auto n = nonzero.size();
    if (n == 0) {
        result.p_value = 1.0;
        result.method = TestMethod::Exact;
        return result;
    }
    std::vector<double> magnitude(n);
    for (std::size_t i = 0; i < n; ++i) magnitude[i] = std::abs(nonzero[i]);
    const auto ranks = average_ranks(magnitude);
    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (nonzero[i] > 0) w_plus += ranks[i];
    }
    result.statistic = w_plus;

    const bool exact = options.force_method ? *options.force_method == TestMethod::Exact
                                            : static_cast<int>(n) <= options.exact_threshold;
    if (exact) {
        if (n > 62) throw Error(ErrorCode::InvalidArgument, "exact signed-rank limited to 62 differences");
        // Doubled average ranks are integers; count sign assignments by the
        // doubled W+ they produce.
        std::vector<std::int64_t> doubled(n);
        std::int64_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            doubled[i] = std::llround(2.0 * ranks[i]);
            total += doubled[i];
        }
        std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
        count[0] = 1.0;
        std::int64_t reach = 0;
        for (const auto r : doubled) {
            for (std::int64_t s = reach; s >= 0; --s) {
                if (count[static_cast<std::size_t>(s)] != 0.0) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
            }
            reach += r;
        }
        const auto w2 = std::llround(2.0 * w_plus);
        const double patterns = std::ldexp(1.0, static_cast<int>(n));
        double lower = 0.0, upper = 0.0;
        for (std::int64_t s = 0; s <= total; ++s) {
            if (s <= w2) lower += count[static_cast<std::size_t>(s)];
            if (s >= w2) upper += count[static_cast<std::size_t>(s)];
        }
        result.method = TestMethod::Exact;
        result.p_value = two_sided_from_tails(lower / patterns, upper / patterns);
        return result;
    }

    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term(magnitude) / 48.0;
    result.method = TestMethod::NormalApproximation;
    if (var <= 0.0) {
        result.p_value = 1.0;
        return result;
    }
    const double z = std::max(0.0, (std::abs(w_plus - mean) - 0.5) / std::sqrt(var));
    result.p_value = std::min(1.0, 2.0 * normal_sf(z));
    return result;
}

TestResult signed_rank_test(std::span<const double> x, std::span<const double> y, const SignedRankOptions& options) {
    if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "paired samples differ in length");
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
    return signed_rank_test(d, options);
}

TestResult rank_sum_test(std::span<const double> a, std::span<const double> b, const RankSumOptions& options) {
    require_non_empty(a, "rank-sum group a");
    require_non_empty(b, "rank-sum group b");
    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    for (const double v : pooled) {
        if (std::isnan(v)) throw Error(ErrorCode::InvalidArgument, "NaN sample");
    }
    const auto ranks = average_ranks(pooled);
    const auto na = a.size(), nb = b.size(), total = pooled.size();
    double rank_a = 0.0;
    for (std::size_t i = 0; i < na; ++i) rank_a += ranks[i];
    const double u_a = rank_a - static_cast<double>(na) * static_cast<double>(na + 1) / 2.0;

    TestResult result;
    result.statistic = u_a;
    result.n_effective = static_cast<std::int64_t>(total);
    const double ties = tie_term(pooled);
    const bool exact = options.force_method
                           ? *options.force_method == TestMethod::Exact
                           : (static_cast<int>(std::min(na, nb)) <= options.exact_threshold && ties == 0.0 &&
                              total <= kMaxExactRankSumSize);
    if (exact) {
        if (ties != 0.0) throw Error(ErrorCode::InvalidArgument, "exact rank-sum requires untied samples");
        // Distribution of the rank sum of the smaller group over all C(N, m) subsets.
        const bool a_small = na <= nb;
        const std::size_t m = a_small ? na : nb;
        const double observed = a_small ? rank_a : static_cast<double>(total * (total + 1)) / 2.0 - rank_a;
        const std::size_t max_sum = m * (2 * total - m + 1) / 2;
        std::vector<std::vector<double>> ways(m + 1, std::vector<double>(max_sum + 1, 0.0));
        ways[0][0] = 1.0;
        for (std::size_t item = 1; item <= total; ++item) {
            for (std::size_t k = std::min(item, m); k >= 1; --k) {
                auto& dst = ways[k];
                const auto& src = ways[k - 1];
                for (std::size_t s = max_sum; s >= item; --s) {
                    if (src[s - item] != 0.0) dst[s] += src[s - item];
                }
            }
        }
        const auto obs = static_cast<std::size_t>(std::llround(observed));
        double all = 0.0, lower = 0.0, upper = 0.0;
        for (std::size_t s = 0; s <= max_sum; ++s) {
            const double w = ways[m][s];
            all += w;
            if (s <= obs) lower += w;
            if (s >= obs) upper += w;
        }
        result.method = TestMethod::Exact;
        result.p_value = two_sided_from_tails(lower / all, upper / all);
        return result;
    }

    const double n1 = static_cast<double>(na), n2 = static_cast<double>(nb), nt = static_cast<double>(total);
    const double mean = n1 * n2 / 2.0;
    const double var = n1 * n2 / 12.0 * ((nt + 1.0) - ties / (nt * (nt - 1.0)));
    result.method = TestMethod::NormalApproximation;
    if (!(var > 0.0)) {
        result.p_value = 1.0;
        return result;
    }
    const double z = std::max(0.0, (std::abs(u_a - mean) - 0.5) / std::sqrt(var));
    result.p_value = std::min(1.0, 2.0 * normal_sf(z));
    return result;
}

MultipleTestResult benjamini_hochberg(std::span<const double> p, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    for (const double v : p) {
        if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::OutOfRangeP, "p-value " + std::to_string(v));
    }
    const std::size_t m = p.size();
    MultipleTestResult out{std::vector<double>(m), std::vector<bool>(m, false)};
    if (m == 0) return out;
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const double scaled = static_cast<double>(m) * p[order[k]] / static_cast<double>(k + 1);
        running = std::min(running, scaled);
        out.adjusted[order[k]] = std::min(1.0, std::max(p[order[k]], running));
    }
    // largest rank whose raw p clears its step-up threshold
    std::size_t cutoff = 0;
    for (std::size_t k = 0; k < m; ++k) {
        if (p[order[k]] <= static_cast<double>(k + 1) * alpha / static_cast<double>(m)) cutoff = k + 1;
    }
    for (std::size_t k = 0; k < cutoff; ++k) out.reject[order[k]] = true;
    return out;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "pearson_r inputs differ in length");
    if (x.size() < 2) throw Error(ErrorCode::EmptyInput, "pearson_r needs at least two pairs");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ConstantInput, "pearson_r undefined for constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double percentile(std::span<const double> values, double q) {
    require_non_empty(values, "percentile input");
    if (!(q >= 0.0 && q <= 100.0)) throw Error(ErrorCode::InvalidArgument, "percentile outside [0, 100]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

BlandAltman bland_altman(std::span<const double> reference, std::span<const double> predicted) {
    if (reference.size() != predicted.size()) throw Error(ErrorCode::LengthMismatch, "bland_altman inputs differ in length");
    require_non_empty(reference, "bland_altman input");
    std::vector<double> diff(reference.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = reference[i] - predicted[i];
    BlandAltman out;
    out.n = static_cast<std::int64_t>(diff.size());
    const double n = static_cast<double>(diff.size());
    out.mean_diff = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
    if (diff.size() > 1) {
        double ss = 0.0;
        for (const double d : diff) ss += (d - out.mean_diff) * (d - out.mean_diff);
        out.sd_diff = std::sqrt(ss / (n - 1.0));
    }
    out.loa_low = out.mean_diff - 1.96 * out.sd_diff;
    out.loa_high = out.mean_diff + 1.96 * out.sd_diff;
    out.p5 = percentile(diff, 5.0);
    out.p50 = percentile(diff, 50.0);
    out.p95 = percentile(diff, 95.0);
    return out;
}

Summary summarize(std::span<const double> values) {
    require_non_empty(values, "summary input");
    Summary s;
    s.n = static_cast<std::int64_t>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    s.median = percentile(values, 50.0);
    s.q1 = percentile(values, 25.0);
    s.q3 = percentile(values, 75.0);
    s.iqr = s.q3 - s.q1;
    s.p5 = percentile(values, 5.0);
    s.p95 = percentile(values, 95.0);
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    s.min = *mn;
    s.max = *mx;
    return s;
}

}  // namespace strokeval::stats
