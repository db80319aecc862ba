#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace strokeval::stats {

constexpr double kDefaultAlpha = 0.05;

enum class TestMethod { Exact, NormalApproximation };

std::string_view to_string(TestMethod method);

struct TestResult {
    double statistic = 0.0;
    double p_value = 1.0;  // two-sided
    std::int64_t n_effective = 0;
    TestMethod method = TestMethod::Exact;
};

struct SignedRankOptions {
    // exact null distribution up to this many non-zero differences
    int exact_threshold = 25;
    std::optional<TestMethod> force_method;
};

// Wilcoxon signed-rank test on paired differences. Zero differences are
// dropped, tied |d| receive average ranks, and the statistic is W+ (the rank
// sum of positive differences). The exact p-value counts all 2^n equally
// likely sign assignments; the approximation is normal with tie and
// continuity correction. All-zero input gives p = 1.
TestResult signed_rank_test(std::span<const double> diffs, const SignedRankOptions& options = {});

TestResult signed_rank_test(std::span<const double> x, std::span<const double> y,
                            const SignedRankOptions& options = {});

struct RankSumOptions {
    // exact distribution when min(n_a, n_b) <= this and there are no ties
    int exact_threshold = 8;
    std::optional<TestMethod> force_method;
};

// Wilcoxon rank-sum / Mann-Whitney U test of two independent samples.
// The statistic is U for group a.
TestResult rank_sum_test(std::span<const double> a, std::span<const double> b,
                         const RankSumOptions& options = {});

struct MultipleTestResult {
    std::vector<double> adjusted;
    std::vector<bool> reject;
};

// Benjamini-Hochberg step-up FDR control, results in input order.
MultipleTestResult benjamini_hochberg(std::span<const double> p, double alpha = kDefaultAlpha);

double pearson_r(std::span<const double> x, std::span<const double> y);

struct BlandAltman {
    std::int64_t n = 0;
    double mean_diff = 0.0;
    double sd_diff = 0.0;  // sample (n-1) standard deviation
    double loa_low = 0.0;
    double loa_high = 0.0;
    double p5 = 0.0, p50 = 0.0, p95 = 0.0;
};

// Differences are reference - predicted; limits of agreement mean +- 1.96 sd.
BlandAltman bland_altman(std::span<const double> reference, std::span<const double> predicted);

// Linear interpolation between closest ranks, q in [0, 100].
double percentile(std::span<const double> values, double q);

struct Summary {
    std::int64_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0, q3 = 0.0, iqr = 0.0;
    double p5 = 0.0, p95 = 0.0;
    double min = 0.0, max = 0.0;
};

Summary summarize(std::span<const double> values);

// 1-based ascending ranks with ties sharing the average rank.
std::vector<double> average_ranks(std::span<const double> values);

// Standard normal upper tail, P(Z > z).
double normal_sf(double z);

}  // namespace strokeval::stats
