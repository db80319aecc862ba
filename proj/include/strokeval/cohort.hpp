#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "strokeval/components.hpp"
#include "strokeval/metrics.hpp"
#include "strokeval/phenotype.hpp"
#include "strokeval/ranking.hpp"
#include "strokeval/stats.hpp"

namespace strokeval {

// One row of a cohort manifest. Paths are resolved against the manifest's
// directory when relative.
struct CaseRecord {
    std::string case_id;
    std::filesystem::path gt;
    std::map<std::string, std::filesystem::path> predictions;  // algorithm -> mask; absent when the cell is empty
    std::string center;
    std::string phase;  // "acute", "subacute" or empty
    std::optional<bool> seen_center;
    std::optional<double> nihss;
    std::optional<double> mrs90;
    std::optional<bool> treatment;
    std::optional<std::filesystem::path> image;   // background volume for slice renderings
    std::optional<std::filesystem::path> expert;  // second human annotation (Turing pool)
    std::optional<std::filesystem::path> atlas;   // per-case territory label map in mask space
    std::map<std::string, double> extra;          // any other numeric column
};

struct Manifest {
    std::filesystem::path path;
    std::vector<std::string> algorithms;  // column order (CSV) or key order (JSON)
    std::vector<CaseRecord> cases;        // file order
};

// CSV columns: case_id, gt, pred:<algorithm>..., and optionally center, phase,
// seen_center, nihss, mrs90, treatment, image, expert, atlas. Unknown columns
// must be numeric and land in CaseRecord::extra.
// JSON: {"cases": [{"case_id": ..., "gt": ..., "predictions": {...}, ...}]}.
// Throws Manifest (schema, with row/column) or DuplicateCaseId.
Manifest load_manifest(const std::filesystem::path& path);

enum class SizeBin { Under5, From5To20, Over20 };

inline constexpr std::array<SizeBin, 3> kSizeBins{SizeBin::Under5, SizeBin::From5To20, SizeBin::Over20};

// under5: v < 5 ml; from5to20: 5 <= v < 20; over20: v >= 20.
SizeBin size_bin(double gt_volume_ml) noexcept;
std::string_view to_string(SizeBin bin) noexcept;

struct AlgorithmResult {
    std::optional<CaseMetrics> metrics;  // empty when the case failed
    std::string error;
};

struct CaseEvaluation {
    std::string case_id;
    std::string center;
    std::string phase;
    std::optional<bool> seen_center;
    std::map<std::string, double> clinical;  // nihss, mrs90, treatment (0/1) and extra numeric columns
    std::string error;  // set when the GT itself could not be used
    std::optional<double> gt_volume_ml;
    std::optional<std::int64_t> gt_lesion_count;
    std::optional<SizeBin> bin;
    std::optional<StrokePattern> gt_pattern;
    std::map<std::string, AlgorithmResult> algorithms;
};

struct MetricSummaries {
    std::int64_t n_ok = 0;
    std::int64_t n_failed = 0;
    std::array<std::optional<stats::Summary>, kMetricCount> metrics;  // empty when n_ok == 0
};

struct CohortEvaluation {
    Connectivity connectivity = kDefaultConnectivity;
    std::vector<std::string> algorithms;
    std::vector<CaseEvaluation> cases;  // sorted by case_id
    std::map<std::string, MetricSummaries> summaries;

    std::int64_t failure_count() const noexcept;
};

double metric_value(const CaseMetrics& m, Metric metric) noexcept;

// Evaluates every (case, algorithm) pair with `workers` threads. Failures
// (missing or unreadable files, grid mismatch, non-binary masks) are recorded
// per pair and never abort the run.
CohortEvaluation evaluate_cohort(const Manifest& manifest, Connectivity conn = kDefaultConnectivity, int workers = 1);

MetricSummaries summarize_metrics(std::span<const CaseMetrics> rows);

// Builds a complete team x case matrix from an evaluation. Cases where any
// algorithm failed are either imputed with the worst observed value of the
// metric (DSC and F1 become 0) or rejected with IncompleteMatrix.
enum class Imputation { Reject, Worst };
MetricMatrix metric_matrix(const CohortEvaluation& eval, Imputation imputation);

struct SubgroupRow {
    std::string group;
    CaseMetrics metrics;
};

struct GroupSummary {
    std::string group;
    MetricSummaries summary;
};

struct GroupComparison {
    std::string group_a;
    std::string group_b;
    Metric metric = Metric::Dice;
    stats::TestResult test;
    double p_adjusted = 1.0;
    bool reject = false;
};

struct SubgroupAnalysis {
    std::vector<GroupSummary> groups;            // sorted by group name
    std::vector<GroupComparison> comparisons;    // BH-adjusted within each metric
    std::vector<std::string> warnings;
};

// Rank-sum tests between every pair of groups. Groups named in
// `expected_groups` that end up without rows, and rows with an empty group,
// are dropped with a warning.
SubgroupAnalysis subgroup_analysis(std::span<const SubgroupRow> rows, std::span<const std::string> expected_groups = {},
                                   double alpha = stats::kDefaultAlpha);

struct VolumeAgreement {
    std::string group;
    std::int64_t n = 0;
    std::optional<double> pearson_r;          // empty for n < 2 or constant input
    std::optional<stats::BlandAltman> bland_altman;
};

// GT versus predicted volume, reference minus predicted.
VolumeAgreement volume_agreement(std::string group, std::span<const double> gt_ml, std::span<const double> pred_ml);

}  // namespace strokeval
