#include "strokeval/cohort.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <boost/tokenizer.hpp>

#include "json.hpp"

#include "strokeval/error.hpp"
#include "strokeval/nifti.hpp"

namespace strokeval {

namespace {

using nlohmann::json;

[[noreturn]] void schema_error(const std::filesystem::path& file, std::size_t row, std::string_view column,
                               const std::string& what) {
    std::ostringstream msg;
    msg << file.string();
    if (row > 0) msg << " row " << row;
    if (!column.empty()) msg << " column '" << column << "'";
    msg << ": " << what;
    throw Error(ErrorCode::Manifest, msg.str());
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::optional<double> parse_number(const std::string& text) {
    double v = 0.0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return v;
}

std::optional<bool> parse_bool(const std::string& text) {
    const auto t = lower(text);
    if (t == "true" || t == "yes" || t == "1") return true;
    if (t == "false" || t == "no" || t == "0") return false;
    return std::nullopt;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

// Applies one named field to a record; shared by the CSV and JSON readers.
void set_field(CaseRecord& rec, const std::string& column, const std::string& value, const std::filesystem::path& base,
               const std::filesystem::path& file, std::size_t row) {
    if (value.empty()) return;
    if (column == "case_id") {
        rec.case_id = value;
    } else if (column == "gt") {
        rec.gt = resolve(base, value);
    } else if (column == "center") {
        rec.center = value;
    } else if (column == "phase") {
        const auto p = lower(value);
        if (p != "acute" && p != "subacute") schema_error(file, row, column, "expected acute or subacute, got '" + value + "'");
        rec.phase = p;
    } else if (column == "seen_center" || column == "treatment") {
        const auto b = parse_bool(value);
        if (!b) schema_error(file, row, column, "expected a boolean, got '" + value + "'");
        (column == "seen_center" ? rec.seen_center : rec.treatment) = *b;
    } else if (column == "nihss" || column == "mrs90") {
        const auto v = parse_number(value);
        if (!v) schema_error(file, row, column, "expected a number, got '" + value + "'");
        (column == "nihss" ? rec.nihss : rec.mrs90) = *v;
    } else if (column == "image") {
        rec.image = resolve(base, value);
    } else if (column == "expert") {
        rec.expert = resolve(base, value);
    } else if (column == "atlas") {
        rec.atlas = resolve(base, value);
    } else if (column.starts_with("pred:")) {
        rec.predictions[column.substr(5)] = resolve(base, value);
    } else {
        const auto v = parse_number(value);
        if (!v) schema_error(file, row, column, "unknown column must hold numbers, got '" + value + "'");
        rec.extra[column] = *v;
    }
}

void finish_record(const CaseRecord& rec, const std::filesystem::path& file, std::size_t row) {
    if (rec.case_id.empty()) schema_error(file, row, "case_id", "missing");
    if (rec.gt.empty()) schema_error(file, row, "gt", "missing");
}

Manifest load_csv(const std::filesystem::path& path, std::istream& in) {
    using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
    Manifest out;
    out.path = path;
    const auto base = path.parent_path();
    std::vector<std::string> header;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        try {
            Tokenizer tok(line, boost::escaped_list_separator<char>(std::string(), ",", "\""));
            for (const auto& cell : tok) cells.push_back(trim(cell));
        } catch (const boost::escaped_list_error& e) {
            schema_error(path, row, "", std::string("malformed CSV: ") + e.what());
        }
        if (header.empty()) {
            header = cells;
            std::set<std::string> seen;
            for (const auto& h : header) {
                if (h.empty()) schema_error(path, row, "", "empty column name");
                if (!seen.insert(h).second) schema_error(path, row, h, "duplicate column");
                if (h.starts_with("pred:")) {
                    if (h.size() == 5) schema_error(path, row, h, "empty algorithm name");
                    out.algorithms.push_back(h.substr(5));
                }
            }
            if (!seen.contains("case_id")) schema_error(path, row, "case_id", "required column missing");
            if (!seen.contains("gt")) schema_error(path, row, "gt", "required column missing");
            continue;
        }
        if (cells.size() != header.size()) {
            schema_error(path, row, "", "expected " + std::to_string(header.size()) + " cells, found " +
                                            std::to_string(cells.size()));
        }
        CaseRecord rec;
        for (std::size_t c = 0; c < cells.size(); ++c) set_field(rec, header[c], cells[c], base, path, row);
        finish_record(rec, path, row);
        out.cases.push_back(std::move(rec));
    }
    if (header.empty()) schema_error(path, 0, "", "no header row");
    return out;
}

std::string json_cell(const json& v, const std::filesystem::path& file, std::size_t row, const std::string& key) {
    if (v.is_null()) return "";
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number()) {
        std::ostringstream s;
        s.precision(17);
        s << v.get<double>();
        return s.str();
    }
    schema_error(file, row, key, "unsupported value type");
}

Manifest load_json(const std::filesystem::path& path, std::istream& in) {
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        schema_error(path, 0, "", std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("cases") || !doc["cases"].is_array()) {
        schema_error(path, 0, "cases", "expected an object with a 'cases' array");
    }
    Manifest out;
    out.path = path;
    const auto base = path.parent_path();
    std::set<std::string> algorithms;
    std::size_t row = 0;
    for (const auto& item : doc["cases"]) {
        ++row;
        if (!item.is_object()) schema_error(path, row, "", "case entry is not an object");
        CaseRecord rec;
        for (const auto& [key, value] : item.items()) {
            if (key == "predictions") {
                if (!value.is_object()) schema_error(path, row, key, "expected an object");
                for (const auto& [algo, p] : value.items()) {
                    if (algo.empty()) schema_error(path, row, key, "empty algorithm name");
                    algorithms.insert(algo);
                    set_field(rec, "pred:" + algo, json_cell(p, path, row, key), base, path, row);
                }
            } else {
                set_field(rec, key, json_cell(value, path, row, key), base, path, row);
            }
        }
        finish_record(rec, path, row);
        out.cases.push_back(std::move(rec));
    }
    out.algorithms.assign(algorithms.begin(), algorithms.end());
    return out;
}

double worst_value(Metric metric, double max_observed) {
    switch (metric) {
        case Metric::Dice:
        case Metric::LesionF1: return 0.0;
        case Metric::Avd:
        case Metric::Ald: return max_observed;
    }
    return 0.0;
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Manifest, "cannot open manifest " + path.string());
    const auto ext = lower(path.extension().string());
    Manifest m = ext == ".json" ? load_json(path, in) : load_csv(path, in);
    std::set<std::string> ids;
    for (const auto& rec : m.cases) {
        if (!ids.insert(rec.case_id).second) {
            throw Error(ErrorCode::DuplicateCaseId, "case_id '" + rec.case_id + "' appears more than once in " + path.string());
        }
    }
    return m;
}

SizeBin size_bin(double gt_volume_ml) noexcept {
    if (gt_volume_ml < 5.0) return SizeBin::Under5;
    if (gt_volume_ml < 20.0) return SizeBin::From5To20;
    return SizeBin::Over20;
}

std::string_view to_string(SizeBin bin) noexcept {
    switch (bin) {
        case SizeBin::Under5: return "under5";
        case SizeBin::From5To20: return "from5to20";
        case SizeBin::Over20: return "over20";
    }
    return "";
}

std::int64_t CohortEvaluation::failure_count() const noexcept {
    std::int64_t n = 0;
    for (const auto& c : cases) {
        for (const auto& [_, r] : c.algorithms) n += r.metrics ? 0 : 1;
    }
    return n;
}

double metric_value(const CaseMetrics& m, Metric metric) noexcept {
    switch (metric) {
        case Metric::Dice: return m.dsc;
        case Metric::Avd: return m.avd_ml;
        case Metric::LesionF1: return m.lesion_f1;
        case Metric::Ald: return static_cast<double>(m.ald);
    }
    return 0.0;
}

MetricSummaries summarize_metrics(std::span<const CaseMetrics> rows) {
    MetricSummaries s;
    s.n_ok = static_cast<std::int64_t>(rows.size());
    if (rows.empty()) return s;
    std::vector<double> values(rows.size());
    for (const Metric metric : kMetrics) {
        for (std::size_t i = 0; i < rows.size(); ++i) values[i] = metric_value(rows[i], metric);
        s.metrics[static_cast<std::size_t>(metric)] = stats::summarize(values);
    }
    return s;
}

CohortEvaluation evaluate_cohort(const Manifest& manifest, Connectivity conn, int workers) {
    CohortEvaluation out;
    out.connectivity = conn;
    out.algorithms = manifest.algorithms;

    std::vector<const CaseRecord*> records;
    for (const auto& r : manifest.cases) records.push_back(&r);
    std::sort(records.begin(), records.end(), [](auto* a, auto* b) { return a->case_id < b->case_id; });
    out.cases.resize(records.size());

    auto run_case = [&](std::size_t k) {
        const CaseRecord& rec = *records[k];
        CaseEvaluation& ce = out.cases[k];
        ce.case_id = rec.case_id;
        ce.center = rec.center;
        ce.phase = rec.phase;
        ce.seen_center = rec.seen_center;
        ce.clinical = rec.extra;
        if (rec.nihss) ce.clinical["nihss"] = *rec.nihss;
        if (rec.mrs90) ce.clinical["mrs90"] = *rec.mrs90;
        if (rec.treatment) ce.clinical["treatment"] = *rec.treatment ? 1.0 : 0.0;
        std::optional<VoxelMask> gt;
        try {
            gt = read_mask(rec.gt);
        } catch (const std::exception& e) {
            ce.error = e.what();
            for (const auto& algo : manifest.algorithms) ce.algorithms[algo] = {std::nullopt, "ground truth unavailable"};
            return;
        }
        const auto gt_labels = connected_components(*gt, conn);
        ce.gt_volume_ml = gt_labels.total_volume_ml;
        ce.gt_lesion_count = gt_labels.lesion_count;
        ce.bin = size_bin(gt_labels.total_volume_ml);
        ce.gt_pattern = classify_pattern(gt_labels).label;
        for (const auto& algo : manifest.algorithms) {
            AlgorithmResult& r = ce.algorithms[algo];
            const auto it = rec.predictions.find(algo);
            if (it == rec.predictions.end()) {
                r.error = "no prediction listed";
                continue;
            }
            try {
                r.metrics = evaluate_case(*gt, gt_labels, read_mask(it->second), conn);
            } catch (const std::exception& e) {
                r.error = e.what();
            }
        }
    };

    const auto n_workers = static_cast<std::size_t>(std::clamp(workers, 1, 256));
    if (n_workers == 1 || records.size() < 2) {
        for (std::size_t k = 0; k < records.size(); ++k) run_case(k);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < std::min(n_workers, records.size()); ++w) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < records.size(); k = next++) run_case(k);
            });
        }
    }

    for (const auto& algo : out.algorithms) {
        std::vector<CaseMetrics> ok;
        std::int64_t failed = 0;
        for (const auto& c : out.cases) {
            const auto& r = c.algorithms.at(algo);
            if (r.metrics) ok.push_back(*r.metrics);
            else ++failed;
        }
        auto s = summarize_metrics(ok);
        s.n_failed = failed;
        out.summaries[algo] = s;
    }
    return out;
}

MetricMatrix metric_matrix(const CohortEvaluation& eval, Imputation imputation) {
    std::vector<std::string> case_ids;
    for (const auto& c : eval.cases) case_ids.push_back(c.case_id);
    MetricMatrix m(eval.algorithms, case_ids);
    std::array<double, kMetricCount> max_observed{};
    for (std::size_t t = 0; t < eval.algorithms.size(); ++t) {
        for (std::size_t c = 0; c < eval.cases.size(); ++c) {
            const auto& r = eval.cases[c].algorithms.at(eval.algorithms[t]);
            if (!r.metrics) continue;
            for (const Metric metric : kMetrics) {
                const double v = metric_value(*r.metrics, metric);
                m.at(t, c, metric) = v;
                auto& mx = max_observed[static_cast<std::size_t>(metric)];
                mx = std::max(mx, v);
            }
        }
    }
    if (imputation == Imputation::Worst) {
        for (std::size_t t = 0; t < eval.algorithms.size(); ++t) {
            for (std::size_t c = 0; c < eval.cases.size(); ++c) {
                for (const Metric metric : kMetrics) {
                    auto& v = m.at(t, c, metric);
                    if (std::isnan(v)) v = worst_value(metric, max_observed[static_cast<std::size_t>(metric)]);
                }
            }
        }
    }
    m.validate();
    return m;
}

SubgroupAnalysis subgroup_analysis(std::span<const SubgroupRow> rows, std::span<const std::string> expected_groups,
                                   double alpha) {
    SubgroupAnalysis out;
    std::map<std::string, std::vector<CaseMetrics>> groups;
    std::int64_t ungrouped = 0;
    for (const auto& r : rows) {
        if (r.group.empty()) ++ungrouped;
        else groups[r.group].push_back(r.metrics);
    }
    if (ungrouped > 0) out.warnings.push_back(std::to_string(ungrouped) + " row(s) without a group value dropped");
    for (const auto& g : expected_groups) {
        if (!groups.contains(g)) out.warnings.push_back("group '" + g + "' has no members; dropped");
    }
    for (const auto& [name, metrics] : groups) out.groups.push_back({name, summarize_metrics(metrics)});

    for (const Metric metric : kMetrics) {
        std::vector<GroupComparison> family;
        std::vector<double> p;
        for (auto a = groups.begin(); a != groups.end(); ++a) {
            for (auto b = std::next(a); b != groups.end(); ++b) {
                std::vector<double> va, vb;
                for (const auto& m : a->second) va.push_back(metric_value(m, metric));
                for (const auto& m : b->second) vb.push_back(metric_value(m, metric));
                GroupComparison cmp;
                cmp.group_a = a->first;
                cmp.group_b = b->first;
                cmp.metric = metric;
                cmp.test = stats::rank_sum_test(va, vb);
                p.push_back(cmp.test.p_value);
                family.push_back(cmp);
            }
        }
        if (family.empty()) continue;
        const auto bh = stats::benjamini_hochberg(p, alpha);
        for (std::size_t k = 0; k < family.size(); ++k) {
            family[k].p_adjusted = bh.adjusted[k];
            family[k].reject = bh.reject[k];
            out.comparisons.push_back(family[k]);
        }
    }
    return out;
}

VolumeAgreement volume_agreement(std::string group, std::span<const double> gt_ml, std::span<const double> pred_ml) {
    if (gt_ml.size() != pred_ml.size()) throw Error(ErrorCode::LengthMismatch, "volume lists differ in length");
    VolumeAgreement out;
    out.group = std::move(group);
    out.n = static_cast<std::int64_t>(gt_ml.size());
    if (gt_ml.empty()) return out;
    out.bland_altman = stats::bland_altman(gt_ml, pred_ml);
    if (gt_ml.size() >= 2) {
        try {
            out.pearson_r = stats::pearson_r(gt_ml, pred_ml);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ConstantInput) throw;
        }
    }
    return out;
}

}  // namespace strokeval
