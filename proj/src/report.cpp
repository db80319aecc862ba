#include "strokeval/report.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "strokeval/error.hpp"

namespace strokeval::report {

namespace {

std::string quote(const std::string& cell) {
    if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
    std::string out = "\"";
    for (const char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string optional_cell(const std::optional<double>& v) { return v ? number(*v) : ""; }

const Json& require(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw Error(ErrorCode::InvalidArgument, std::string("evaluation document lacks '") + key + "'");
    }
    return j.at(key);
}

}  // namespace

std::string number(double v) {
    if (std::isnan(v)) return "";
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return ec == std::errc() ? std::string(buf.data(), ptr) : std::string();
}

Csv::Csv(std::vector<std::string> header) : width_(header.size()) { row(std::move(header)); }

Csv& Csv::row(std::vector<std::string> cells) {
    if (cells.size() != width_) throw Error(ErrorCode::InvalidArgument, "CSV row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) text_ += ',';
        text_ += quote(cells[i]);
    }
    text_ += '\n';
    return *this;
}

std::string Csv::str() const { return text_; }

Json to_json(const CaseMetrics& m) {
    return Json{{"dsc", m.dsc},
                {"avd_ml", m.avd_ml},
                {"lesion_f1", m.lesion_f1},
                {"ald", m.ald},
                {"gt_volume_ml", m.gt_volume_ml},
                {"pred_volume_ml", m.pred_volume_ml},
                {"gt_lesion_count", m.gt_lesion_count},
                {"pred_lesion_count", m.pred_lesion_count},
                {"lesion_tp", m.lesion_tp},
                {"lesion_fp", m.lesion_fp},
                {"lesion_fn", m.lesion_fn}};
}

CaseMetrics case_metrics_from_json(const Json& j) {
    CaseMetrics m;
    m.dsc = require(j, "dsc").get<double>();
    m.avd_ml = require(j, "avd_ml").get<double>();
    m.lesion_f1 = require(j, "lesion_f1").get<double>();
    m.ald = require(j, "ald").get<std::int64_t>();
    m.gt_volume_ml = require(j, "gt_volume_ml").get<double>();
    m.pred_volume_ml = require(j, "pred_volume_ml").get<double>();
    m.gt_lesion_count = require(j, "gt_lesion_count").get<std::int64_t>();
    m.pred_lesion_count = require(j, "pred_lesion_count").get<std::int64_t>();
    m.lesion_tp = require(j, "lesion_tp").get<std::int64_t>();
    m.lesion_fp = require(j, "lesion_fp").get<std::int64_t>();
    m.lesion_fn = require(j, "lesion_fn").get<std::int64_t>();
    return m;
}

Json to_json(const stats::Summary& s) {
    return Json{{"n", s.n},   {"median", s.median}, {"q1", s.q1},   {"q3", s.q3},   {"iqr", s.iqr},
                {"p5", s.p5}, {"p95", s.p95},       {"mean", s.mean}, {"min", s.min}, {"max", s.max}};
}

Json to_json(const stats::TestResult& t) {
    return Json{{"statistic", t.statistic},
                {"p_value", t.p_value},
                {"n_effective", t.n_effective},
                {"method", std::string(stats::to_string(t.method))}};
}

Json to_json(const stats::BlandAltman& b) {
    return Json{{"n", b.n},
                {"mean_diff", b.mean_diff},
                {"sd_diff", b.sd_diff},
                {"loa_low", b.loa_low},
                {"loa_high", b.loa_high},
                {"p5", b.p5},
                {"p50", b.p50},
                {"p95", b.p95}};
}

Json to_json(const MetricSummaries& s) {
    Json j{{"n_ok", s.n_ok}, {"n_failed", s.n_failed}};
    for (const Metric m : kMetrics) {
        const auto& v = s.metrics[static_cast<std::size_t>(m)];
        j[std::string(metric_key(m))] = v ? to_json(*v) : Json(nullptr);
    }
    return j;
}

Json to_json(const SubgroupAnalysis& s) {
    Json groups = Json::array();
    for (const auto& g : s.groups) {
        Json entry{{"group", g.group}};
        entry["summary"] = to_json(g.summary);
        groups.push_back(entry);
    }
    Json comparisons = Json::array();
    for (const auto& c : s.comparisons) {
        comparisons.push_back(Json{{"group_a", c.group_a},
                                   {"group_b", c.group_b},
                                   {"metric", std::string(metric_key(c.metric))},
                                   {"test", to_json(c.test)},
                                   {"p_adjusted", c.p_adjusted},
                                   {"reject", c.reject}});
    }
    return Json{{"groups", groups}, {"comparisons", comparisons}, {"warnings", s.warnings}};
}

Json to_json(const VolumeAgreement& v) {
    return Json{{"group", v.group},
                {"n", v.n},
                {"pearson_r", optional_number(v.pearson_r)},
                {"bland_altman", v.bland_altman ? to_json(*v.bland_altman) : Json(nullptr)}};
}

Json to_json(const ClassificationReport& r) {
    Json per_class = Json::array();
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        per_class.push_back(Json{{"class", r.classes[c]},
                                 {"support", r.support[c]},
                                 {"precision", r.precision[c]},
                                 {"recall", r.recall[c]},
                                 {"f1", r.f1[c]}});
    }
    Json confusion = Json::array();
    for (std::size_t t = 0; t < r.classes.size(); ++t) {
        Json row = Json::array();
        for (std::size_t p = 0; p < r.classes.size(); ++p) row.push_back(r.count(t, p));
        confusion.push_back(row);
    }
    return Json{{"classes", r.classes},
                {"per_class", per_class},
                {"confusion", confusion},
                {"balanced_accuracy", r.balanced_accuracy},
                {"accuracy", r.accuracy},
                {"excluded_from_balanced", r.excluded_from_balanced}};
}

Json evaluation_document(const CohortEvaluation& eval, const Json& run) {
    Json doc{{"schema", kEvalSchema}};
    Json meta = run;
    meta["connectivity"] = static_cast<int>(eval.connectivity);
    meta["algorithms"] = eval.algorithms;
    meta["case_count"] = eval.cases.size();
    meta["failure_count"] = eval.failure_count();
    doc["run"] = meta;

    Json cases = Json::array();
    for (const auto& c : eval.cases) {
        Json entry{{"case_id", c.case_id},
                   {"center", c.center.empty() ? Json(nullptr) : Json(c.center)},
                   {"phase", c.phase.empty() ? Json(nullptr) : Json(c.phase)},
                   {"seen_center", c.seen_center ? Json(*c.seen_center) : Json(nullptr)}};
        Json clinical = Json::object();
        for (const auto& [k, v] : c.clinical) clinical[k] = v;
        entry["clinical"] = clinical;
        entry["error"] = c.error.empty() ? Json(nullptr) : Json(c.error);
        if (c.gt_volume_ml) {
            entry["gt"] = Json{{"volume_ml", *c.gt_volume_ml},
                               {"lesion_count", *c.gt_lesion_count},
                               {"size_bin", std::string(to_string(*c.bin))},
                               {"pattern", std::string(to_string(*c.gt_pattern))}};
        } else {
            entry["gt"] = nullptr;
        }
        Json results = Json::object();
        for (const auto& algo : eval.algorithms) {
            const auto& r = c.algorithms.at(algo);
            if (r.metrics) {
                results[algo] = Json{{"status", "ok"}, {"metrics", to_json(*r.metrics)}, {"error", nullptr}};
            } else {
                results[algo] = Json{{"status", "failed"}, {"metrics", nullptr}, {"error", r.error}};
            }
        }
        entry["results"] = results;
        cases.push_back(entry);
    }
    doc["cases"] = cases;

    Json summary = Json::object();
    for (const auto& algo : eval.algorithms) summary[algo] = to_json(eval.summaries.at(algo));
    doc["summary"] = summary;
    return doc;
}

CohortEvaluation evaluation_from_document(const Json& doc) {
    if (!doc.is_object() || doc.value("schema", std::string()) != kEvalSchema) {
        throw Error(ErrorCode::InvalidArgument, std::string("not a ") + kEvalSchema + " document");
    }
    try {
        CohortEvaluation eval;
        const Json& run = require(doc, "run");
        eval.connectivity = connectivity_from_int(require(run, "connectivity").get<int>());
        eval.algorithms = require(run, "algorithms").get<std::vector<std::string>>();
        for (const auto& c : require(doc, "cases")) {
            CaseEvaluation ce;
            ce.case_id = require(c, "case_id").get<std::string>();
            if (c.contains("center") && !c["center"].is_null()) ce.center = c["center"].get<std::string>();
            if (c.contains("phase") && !c["phase"].is_null()) ce.phase = c["phase"].get<std::string>();
            if (c.contains("seen_center") && !c["seen_center"].is_null()) ce.seen_center = c["seen_center"].get<bool>();
            if (c.contains("clinical")) {
                for (const auto& [k, v] : c["clinical"].items()) ce.clinical[k] = v.get<double>();
            }
            if (c.contains("error") && !c["error"].is_null()) ce.error = c["error"].get<std::string>();
            if (c.contains("gt") && !c["gt"].is_null()) {
                const auto& g = c["gt"];
                ce.gt_volume_ml = require(g, "volume_ml").get<double>();
                ce.gt_lesion_count = require(g, "lesion_count").get<std::int64_t>();
                ce.bin = size_bin(*ce.gt_volume_ml);
                ce.gt_pattern = stroke_pattern_from_string(require(g, "pattern").get<std::string>());
            }
            const Json& results = require(c, "results");
            for (const auto& algo : eval.algorithms) {
                const Json& r = require(results, algo.c_str());
                AlgorithmResult ar;
                if (r.value("status", std::string()) == "ok") {
                    ar.metrics = case_metrics_from_json(require(r, "metrics"));
                } else {
                    ar.error = r.contains("error") && r["error"].is_string() ? r["error"].get<std::string>() : "failed";
                }
                ce.algorithms[algo] = ar;
            }
            eval.cases.push_back(std::move(ce));
        }
        for (const auto& algo : eval.algorithms) {
            std::vector<CaseMetrics> ok;
            std::int64_t failed = 0;
            for (const auto& c : eval.cases) {
                const auto& r = c.algorithms.at(algo);
                if (r.metrics) ok.push_back(*r.metrics);
                else ++failed;
            }
            auto s = summarize_metrics(ok);
            s.n_failed = failed;
            eval.summaries[algo] = s;
        }
        return eval;
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed evaluation document: ") + e.what());
    }
}

std::string manifest_csv(const Manifest& manifest) {
    std::set<std::string> extra_columns;
    bool has[9] = {};
    for (const auto& c : manifest.cases) {
        for (const auto& [k, _] : c.extra) extra_columns.insert(k);
        has[0] |= !c.center.empty();
        has[1] |= !c.phase.empty();
        has[2] |= c.seen_center.has_value();
        has[3] |= c.nihss.has_value();
        has[4] |= c.mrs90.has_value();
        has[5] |= c.treatment.has_value();
        has[6] |= c.image.has_value();
        has[7] |= c.expert.has_value();
        has[8] |= c.atlas.has_value();
    }
    static constexpr const char* kOptional[9] = {"center", "phase", "seen_center", "nihss", "mrs90",
                                                 "treatment", "image", "expert", "atlas"};
    std::vector<std::string> header{"case_id", "gt"};
    for (const auto& a : manifest.algorithms) header.push_back("pred:" + a);
    for (int k = 0; k < 9; ++k)
        if (has[k]) header.push_back(kOptional[k]);
    for (const auto& e : extra_columns) header.push_back(e);

    auto flag = [](const std::optional<bool>& b) { return b ? std::string(*b ? "true" : "false") : std::string(); };
    auto opt_path = [](const std::optional<std::filesystem::path>& p) { return p ? p->string() : std::string(); };
    auto opt_num = [](const std::optional<double>& v) { return v ? number(*v) : std::string(); };

    Csv csv(header);
    for (const auto& c : manifest.cases) {
        std::vector<std::string> row{c.case_id, c.gt.string()};
        for (const auto& a : manifest.algorithms) {
            const auto it = c.predictions.find(a);
            row.push_back(it == c.predictions.end() ? "" : it->second.string());
        }
        const std::string optional[9] = {c.center,         c.phase,          flag(c.seen_center),
                                         opt_num(c.nihss), opt_num(c.mrs90), flag(c.treatment),
                                         opt_path(c.image), opt_path(c.expert), opt_path(c.atlas)};
        for (int k = 0; k < 9; ++k)
            if (has[k]) row.push_back(optional[k]);
        for (const auto& e : extra_columns) {
            const auto it = c.extra.find(e);
            row.push_back(it == c.extra.end() ? "" : number(it->second));
        }
        csv.row(std::move(row));
    }
    return csv.str();
}

std::string case_metrics_csv(const CohortEvaluation& eval) {
    Csv csv({"case_id", "algorithm", "status", "dsc", "avd_ml", "lesion_f1", "ald", "gt_volume_ml", "pred_volume_ml",
             "gt_lesion_count", "pred_lesion_count", "lesion_tp", "lesion_fp", "lesion_fn", "size_bin", "gt_pattern",
             "error"});
    for (const auto& c : eval.cases) {
        const std::string bin = c.bin ? std::string(to_string(*c.bin)) : "";
        const std::string pattern = c.gt_pattern ? std::string(to_string(*c.gt_pattern)) : "";
        for (const auto& algo : eval.algorithms) {
            const auto& r = c.algorithms.at(algo);
            if (r.metrics) {
                const auto& m = *r.metrics;
                csv.row({c.case_id, algo, "ok", number(m.dsc), number(m.avd_ml), number(m.lesion_f1),
                         std::to_string(m.ald), number(m.gt_volume_ml), number(m.pred_volume_ml),
                         std::to_string(m.gt_lesion_count), std::to_string(m.pred_lesion_count),
                         std::to_string(m.lesion_tp), std::to_string(m.lesion_fp), std::to_string(m.lesion_fn), bin,
                         pattern, ""});
            } else {
                csv.row({c.case_id, algo, "failed", "", "", "", "", optional_cell(c.gt_volume_ml), "", "", "", "", "",
                         "", bin, pattern, r.error});
            }
        }
    }
    return csv.str();
}

std::string summary_csv(const CohortEvaluation& eval) {
    Csv csv({"algorithm", "metric", "n_ok", "n_failed", "median", "q1", "q3", "iqr", "p5", "p95", "mean", "min", "max"});
    for (const auto& algo : eval.algorithms) {
        const auto& s = eval.summaries.at(algo);
        for (const Metric m : kMetrics) {
            const auto& v = s.metrics[static_cast<std::size_t>(m)];
            if (v) {
                csv.row({algo, std::string(metric_key(m)), std::to_string(s.n_ok), std::to_string(s.n_failed),
                         number(v->median), number(v->q1), number(v->q3), number(v->iqr), number(v->p5),
                         number(v->p95), number(v->mean), number(v->min), number(v->max)});
            } else {
                csv.row({algo, std::string(metric_key(m)), "0", std::to_string(s.n_failed), "", "", "", "", "", "", "",
                         "", ""});
            }
        }
    }
    return csv.str();
}

Json leaderboard_document(const RankTable& table, const SignificanceMap& significance, const Json& run) {
    Json doc{{"schema", kLeaderboardSchema}};
    Json meta = run;
    meta["scheme"] = std::string(to_string(table.scheme));
    if (table.scheme == RankingScheme::AggregateThenRank) meta["aggregator"] = std::string(to_string(table.aggregator));
    meta["team_count"] = table.teams.size();
    meta["case_count"] = table.cases.size();
    meta["alpha"] = significance.alpha;
    doc["run"] = meta;

    std::vector<std::size_t> order(table.teams.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return table.positions[a] != table.positions[b] ? table.positions[a] < table.positions[b]
                                                        : table.teams[a] < table.teams[b];
    });
    Json rows = Json::array();
    for (const auto t : order) {
        Json metric_ranks = Json::object();
        for (const Metric m : kMetrics) metric_ranks[std::string(metric_key(m))] = table.metric_rank(t, m);
        Json row{{"position", table.positions[t]}, {"team", table.teams[t]}, {"score", table.scores[t]}};
        row["metric_ranks"] = metric_ranks;
        if (!table.metric_aggregates.empty()) {
            Json aggregates = Json::object();
            for (const Metric m : kMetrics) {
                aggregates[std::string(metric_key(m))] = table.metric_aggregates[t * kMetricCount + static_cast<std::size_t>(m)];
            }
            row["metric_aggregates"] = aggregates;
        }
        rows.push_back(row);
    }
    doc["leaderboard"] = rows;

    Json sig = Json::object();
    const std::size_t nt = significance.teams.size();
    for (const Metric m : kMetrics) {
        const auto mi = static_cast<std::size_t>(m);
        Json pairs = Json::array();
        for (std::size_t a = 0; a < nt; ++a) {
            for (std::size_t b = a + 1; b < nt; ++b) {
                pairs.push_back(Json{{"team_a", significance.teams[a]},
                                     {"team_b", significance.teams[b]},
                                     {"p_value", significance.p_raw[mi][a * nt + b]},
                                     {"p_adjusted", significance.p_adjusted[mi][a * nt + b]},
                                     {"reject", static_cast<bool>(significance.reject[mi][a * nt + b])}});
            }
        }
        sig[std::string(metric_key(m))] = pairs;
    }
    doc["significance"] = sig;
    return doc;
}

std::string leaderboard_csv(const RankTable& table) {
    Csv csv({"position", "team", "score", "rank_dsc", "rank_avd_ml", "rank_lesion_f1", "rank_ald"});
    std::vector<std::size_t> order(table.teams.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
        return table.positions[a] != table.positions[b] ? table.positions[a] < table.positions[b]
                                                        : table.teams[a] < table.teams[b];
    });
    for (const auto t : order) {
        csv.row({std::to_string(table.positions[t]), table.teams[t], number(table.scores[t]),
                 number(table.metric_rank(t, Metric::Dice)), number(table.metric_rank(t, Metric::Avd)),
                 number(table.metric_rank(t, Metric::LesionF1)), number(table.metric_rank(t, Metric::Ald))});
    }
    return csv.str();
}

std::string significance_csv(const SignificanceMap& s) {
    Csv csv({"metric", "team_a", "team_b", "p_value", "p_adjusted", "reject"});
    const std::size_t nt = s.teams.size();
    for (const Metric m : kMetrics) {
        const auto mi = static_cast<std::size_t>(m);
        for (std::size_t a = 0; a < nt; ++a) {
            for (std::size_t b = a + 1; b < nt; ++b) {
                csv.row({std::string(metric_key(m)), s.teams[a], s.teams[b], number(s.p_raw[mi][a * nt + b]),
                         number(s.p_adjusted[mi][a * nt + b]), s.reject[mi][a * nt + b] ? "true" : "false"});
            }
        }
    }
    return csv.str();
}

Json bootstrap_document(const BootstrapResult& r, const Json& run) {
    Json doc{{"schema", kBootstrapSchema}};
    Json meta = run;
    meta["scheme"] = std::string(to_string(r.scheme));
    if (r.scheme == RankingScheme::AggregateThenRank) meta["aggregator"] = std::string(to_string(r.aggregator));
    meta["n_boot"] = r.n_boot;
    meta["seed"] = r.seed;
    doc["run"] = meta;
    Json teams = Json::array();
    const std::size_t nt = r.teams.size();
    for (std::size_t t = 0; t < nt; ++t) {
        Json hist = Json::array();
        for (std::size_t p = 1; p <= nt; ++p) hist.push_back(r.count(t, static_cast<int>(p)));
        teams.push_back(Json{{"team", r.teams[t]},
                             {"mean_position", r.mean_position[t]},
                             {"sd_position", r.sd_position[t]},
                             {"position_histogram", hist}});
    }
    doc["teams"] = teams;
    Json raw = Json::array();
    for (int b = 0; b < r.n_boot; ++b) {
        Json row = Json::array();
        for (std::size_t t = 0; t < nt; ++t) row.push_back(r.position(static_cast<std::size_t>(b), t));
        raw.push_back(row);
    }
    doc["positions"] = raw;
    return doc;
}

std::string bootstrap_csv(const BootstrapResult& r) {
    Csv csv({"team", "position", "count", "fraction"});
    const std::size_t nt = r.teams.size();
    for (std::size_t t = 0; t < nt; ++t) {
        for (std::size_t p = 1; p <= nt; ++p) {
            const auto n = r.count(t, static_cast<int>(p));
            csv.row({r.teams[t], std::to_string(p), std::to_string(n),
                     number(static_cast<double>(n) / static_cast<double>(r.n_boot))});
        }
    }
    return csv.str();
}

std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, path.string() + " is not valid JSON: " + e.what());
    }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out << content;
        if (!out) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace strokeval::report
