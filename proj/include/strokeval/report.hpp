#pragma once

// Result documents written by the command-line tools: one JSON document per
// run plus flat CSV mirrors. Nothing here depends on wall-clock time, so the
// same inputs always produce byte-identical files.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "strokeval/cohort.hpp"
#include "strokeval/phenotype.hpp"
#include "strokeval/ranking.hpp"
#include "strokeval/stats.hpp"

namespace strokeval::report {

using Json = nlohmann::ordered_json;

inline constexpr const char* kEvalSchema = "strokeval.eval/1";
inline constexpr const char* kLeaderboardSchema = "strokeval.leaderboard/1";
inline constexpr const char* kBootstrapSchema = "strokeval.bootstrap/1";
inline constexpr const char* kPhenotypeSchema = "strokeval.phenotype/1";
inline constexpr const char* kTerritorySchema = "strokeval.territory/1";
inline constexpr const char* kAgreementSchema = "strokeval.agreement/1";
inline constexpr const char* kEnsembleSchema = "strokeval.ensemble/1";

// Shortest round-trip decimal; empty for NaN.
std::string number(double v);

// Minimal CSV writer with RFC 4180 quoting.
class Csv {
public:
    explicit Csv(std::vector<std::string> header);
    Csv& row(std::vector<std::string> cells);
    std::string str() const;

private:
    std::size_t width_;
    std::string text_;
};

Json to_json(const CaseMetrics& m);
Json to_json(const stats::Summary& s);
Json to_json(const stats::TestResult& t);
Json to_json(const stats::BlandAltman& b);
Json to_json(const MetricSummaries& s);
Json to_json(const SubgroupAnalysis& s);
Json to_json(const VolumeAgreement& v);
Json to_json(const ClassificationReport& r);

CaseMetrics case_metrics_from_json(const Json& j);

Json evaluation_document(const CohortEvaluation& eval, const Json& run);
// Inverse of evaluation_document for the fields later stages need. Throws
// InvalidArgument when the document is not an evaluation result.
CohortEvaluation evaluation_from_document(const Json& doc);

// Manifest as CSV with resolved paths; loads back to the same records.
std::string manifest_csv(const Manifest& manifest);

std::string case_metrics_csv(const CohortEvaluation& eval);
std::string summary_csv(const CohortEvaluation& eval);

Json leaderboard_document(const RankTable& table, const SignificanceMap& significance, const Json& run);
std::string leaderboard_csv(const RankTable& table);
std::string significance_csv(const SignificanceMap& significance);

Json bootstrap_document(const BootstrapResult& result, const Json& run);
std::string bootstrap_csv(const BootstrapResult& result);

// Serialized with a trailing newline, two-space indent.
std::string dump(const Json& doc);
Json read_json_file(const std::filesystem::path& path);

// Writes via a temporary file and rename so readers never see partial output.
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace strokeval::report
