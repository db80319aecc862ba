// strokeval: cohort evaluation, ensembling, ranking and phenotyping of
// stroke lesion segmentations.
//
// Exit codes: 0 success, 2 invalid input or options, 3 some cases failed
// (outputs are still written, failed cases carry null metrics).

#include <algorithm>
#include <atomic>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "strokeval/cohort.hpp"
#include "strokeval/ensemble.hpp"
#include "strokeval/error.hpp"
#include "strokeval/phenotype.hpp"
#include "strokeval/ranking.hpp"
#include "strokeval/render.hpp"
#include "strokeval/report.hpp"
#include "strokeval/turing.hpp"

namespace fs = std::filesystem;
using namespace strokeval;
using report::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitPartial = 3;

struct Invalid : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Outputs are buffered and written only after every input has been read.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}
    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }
    void add_json(const std::string& name, const Json& doc) { add(name, report::dump(doc)); }
    void flush() const {
        for (const auto& [name, content] : files_) report::write_file(dir_ / name, content);
    }

private:
    fs::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const auto w = std::min<std::size_t>(static_cast<std::size_t>(std::clamp(workers, 1, 256)), n);
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    return out;
}

std::string safe_name(const std::string& id) {
    std::string out = id;
    for (auto& c : out) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    }
    return out;
}

std::vector<const CaseRecord*> sorted_cases(const Manifest& m) {
    std::vector<const CaseRecord*> out;
    for (const auto& c : m.cases) out.push_back(&c);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->case_id < b->case_id; });
    return out;
}

std::vector<std::string> select_algorithms(const std::vector<std::string>& available, const std::string& requested) {
    if (requested.empty()) return available;
    auto chosen = split_list(requested);
    for (const auto& a : chosen) {
        if (std::find(available.begin(), available.end(), a) == available.end()) {
            throw Invalid("unknown algorithm '" + a + "'");
        }
    }
    std::set<std::string> unique(chosen.begin(), chosen.end());
    if (unique.size() != chosen.size()) throw Invalid("algorithm listed twice");
    return chosen;
}

RankingScheme parse_scheme(const std::string& s) {
    return s == "aggregate-then-rank" ? RankingScheme::AggregateThenRank : RankingScheme::RankThenAggregate;
}

Aggregator parse_aggregator(const std::string& s) { return s == "mean" ? Aggregator::Mean : Aggregator::Median; }

CohortEvaluation load_evaluation(const fs::path& path, const std::string& algorithms) {
    auto eval = report::evaluation_from_document(report::read_json_file(path));
    const auto chosen = select_algorithms(eval.algorithms, algorithms);
    if (chosen != eval.algorithms) {
        eval.algorithms = chosen;
        std::map<std::string, MetricSummaries> kept;
        for (const auto& a : chosen) kept[a] = eval.summaries.at(a);
        eval.summaries = kept;
    }
    return eval;
}

std::int64_t missing_cells(const CohortEvaluation& eval) {
    std::int64_t n = 0;
    for (const auto& c : eval.cases)
        for (const auto& a : eval.algorithms) n += c.algorithms.at(a).metrics ? 0 : 1;
    return n;
}

// Territory atlas for one case: the per-case column wins over --atlas.
class AtlasSource {
public:
    AtlasSource(const std::string& atlas, const std::string& legend) {
        if (!legend.empty()) legend_ = legend;
        if (!atlas.empty()) {
            if (legend.empty()) throw Invalid("--atlas needs --legend");
            shared_ = load_atlas(atlas, legend);
        }
    }
    bool configured() const { return legend_.has_value(); }
    TerritoryAtlas for_case(const CaseRecord& rec) const {
        if (rec.atlas) {
            if (!legend_) throw Error(ErrorCode::InvalidArgument, "case atlas given without --legend");
            return load_atlas(*rec.atlas, *legend_);
        }
        if (!shared_) throw Error(ErrorCode::InvalidArgument, "no atlas for case " + rec.case_id);
        return *shared_;
    }

private:
    std::optional<fs::path> legend_;
    std::optional<TerritoryAtlas> shared_;
};

Json pattern_json(const PatternCall& p) {
    return Json{{"pattern", std::string(to_string(p.label))},
                {"rule", p.rule},
                {"lesion_count", p.lesion_count},
                {"total_volume_ml", p.total_volume_ml},
                {"largest_fraction", p.largest_fraction}};
}

Json territory_json(const TerritoryAssignment& t) {
    Json loads = Json::object();
    for (const Territory terr : kTerritories) loads[std::string(to_string(terr))] = t.load(terr);
    return Json{{"territory", std::string(to_string(t.territory))}, {"tie", t.tie}, {"load_ml", loads}};
}

void classification_csv_rows(report::Csv& csv, const std::string& algo, const ClassificationReport& r) {
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        csv.row({algo, r.classes[c], std::to_string(r.support[c]), report::number(r.precision[c]),
                 report::number(r.recall[c]), report::number(r.f1[c])});
    }
    csv.row({algo, "balanced_accuracy", "", "", report::number(r.balanced_accuracy), ""});
    csv.row({algo, "accuracy", "", "", report::number(r.accuracy), ""});
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string manifest;
    std::string out;
    int connectivity = 26;
    int workers = 1;
    std::string group_by;
    std::string atlas;
    std::string legend;
    double alpha = stats::kDefaultAlpha;
};

int run_eval(const EvalOptions& o) {
    const auto conn = connectivity_from_int(o.connectivity);
    const auto groupings = split_list(o.group_by);
    static const std::set<std::string> kGroupings{"center", "phase", "seen_center", "size_bin", "pattern", "territory"};
    for (const auto& g : groupings) {
        if (!kGroupings.contains(g)) throw Invalid("unknown --group-by value '" + g + "'");
    }
    const bool by_territory = std::find(groupings.begin(), groupings.end(), "territory") != groupings.end();
    const AtlasSource atlas(o.atlas, o.legend);
    if (by_territory && !atlas.configured()) throw Invalid("--group-by territory needs --legend and an atlas");
    const auto manifest = load_manifest(o.manifest);

    const auto eval = evaluate_cohort(manifest, conn, o.workers);

    std::map<std::string, std::string> territory_of;
    std::vector<std::string> warnings;
    if (by_territory) {
        std::map<std::string, const CaseRecord*> by_id;
        for (const auto& c : manifest.cases) by_id[c.case_id] = &c;
        std::vector<std::string> found(eval.cases.size());
        std::vector<std::string> errors(eval.cases.size());
        parallel_for(eval.cases.size(), o.workers, [&](std::size_t k) {
            const auto& c = eval.cases[k];
            if (!c.error.empty()) return;
            try {
                const auto& rec = *by_id.at(c.case_id);
                const auto labels = connected_components(read_mask(rec.gt), conn);
                found[k] = to_string(territory_assignment(labels, atlas.for_case(rec)).territory);
            } catch (const std::exception& e) {
                errors[k] = c.case_id + ": no territory (" + e.what() + ")";
            }
        });
        for (std::size_t k = 0; k < eval.cases.size(); ++k) {
            if (!found[k].empty()) territory_of[eval.cases[k].case_id] = found[k];
            if (!errors[k].empty()) warnings.push_back(errors[k]);
        }
    }

    auto group_value = [&](const CaseEvaluation& c, const std::string& g) -> std::string {
        if (g == "center") return c.center;
        if (g == "phase") return c.phase;
        if (g == "seen_center") return c.seen_center ? (*c.seen_center ? "seen" : "unseen") : "";
        if (g == "size_bin") return c.bin ? std::string(to_string(*c.bin)) : "";
        if (g == "pattern") return c.gt_pattern ? std::string(to_string(*c.gt_pattern)) : "";
        const auto it = territory_of.find(c.case_id);
        return it == territory_of.end() ? "" : it->second;
    };
    auto expected_groups = [](const std::string& g) -> std::vector<std::string> {
        if (g == "phase") return {"acute", "subacute"};
        if (g == "size_bin") return {"under5", "from5to20", "over20"};
        return {};
    };

    Json run{{"command", "eval"}, {"manifest", o.manifest}};
    auto doc = report::evaluation_document(eval, run);
    if (!warnings.empty()) doc["warnings"] = warnings;
    report::Csv sub_csv({"group_by", "algorithm", "group_a", "group_b", "metric", "statistic", "p_value", "p_adjusted",
                         "reject", "method"});
    report::Csv group_csv({"group_by", "algorithm", "group", "metric", "n", "median", "q1", "q3", "iqr", "p5", "p95",
                           "mean"});
    if (!groupings.empty()) {
        Json subgroups = Json::object();
        for (const auto& g : groupings) {
            Json per_algo = Json::object();
            for (const auto& algo : eval.algorithms) {
                std::vector<SubgroupRow> rows;
                for (const auto& c : eval.cases) {
                    const auto& r = c.algorithms.at(algo);
                    if (r.metrics) rows.push_back({group_value(c, g), *r.metrics});
                }
                const auto expected = expected_groups(g);
                const auto analysis = subgroup_analysis(rows, expected, o.alpha);
                per_algo[algo] = report::to_json(analysis);
                for (const auto& cmp : analysis.comparisons) {
                    sub_csv.row({g, algo, cmp.group_a, cmp.group_b, std::string(metric_key(cmp.metric)),
                                 report::number(cmp.test.statistic), report::number(cmp.test.p_value),
                                 report::number(cmp.p_adjusted), cmp.reject ? "true" : "false",
                                 std::string(stats::to_string(cmp.test.method))});
                }
                for (const auto& gs : analysis.groups) {
                    for (const Metric m : kMetrics) {
                        const auto& s = gs.summary.metrics[static_cast<std::size_t>(m)];
                        if (!s) continue;
                        group_csv.row({g, algo, gs.group, std::string(metric_key(m)), std::to_string(s->n),
                                       report::number(s->median), report::number(s->q1), report::number(s->q3),
                                       report::number(s->iqr), report::number(s->p5), report::number(s->p95),
                                       report::number(s->mean)});
                    }
                }
            }
            subgroups[g] = per_algo;
        }
        doc["subgroups"] = subgroups;
    }

    Outputs out(o.out);
    out.add_json("eval.json", doc);
    out.add("case_metrics.csv", report::case_metrics_csv(eval));
    out.add("summary.csv", report::summary_csv(eval));
    if (!groupings.empty()) {
        out.add("subgroups.csv", sub_csv.str());
        out.add("subgroup_summary.csv", group_csv.str());
    }
    out.flush();

    const auto failures = eval.failure_count();
    std::cerr << "evaluated " << eval.cases.size() << " cases x " << eval.algorithms.size() << " algorithms";
    if (failures > 0) std::cerr << ", " << failures << " failed";
    std::cerr << "\n";
    return failures > 0 ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// ensemble

struct EnsembleOptions {
    std::string manifest;
    std::string out;
    std::string algorithms;
    std::string name = "ensemble";
    int workers = 1;
};

int run_ensemble(const EnsembleOptions& o) {
    auto manifest = load_manifest(o.manifest);
    const auto members = select_algorithms(manifest.algorithms, o.algorithms);
    if (members.empty()) throw Invalid("no algorithms to ensemble");
    if (std::find(manifest.algorithms.begin(), manifest.algorithms.end(), o.name) != manifest.algorithms.end()) {
        throw Invalid("algorithm '" + o.name + "' already exists in the manifest");
    }
    if (o.name.empty() || o.name.find(',') != std::string::npos) throw Invalid("invalid ensemble name");
    std::set<std::string> names;
    for (const auto& c : manifest.cases) {
        if (!names.insert(safe_name(c.case_id)).second) throw Invalid("case ids collide as file names: " + c.case_id);
    }
    const fs::path out_dir(o.out);
    const fs::path mask_dir = out_dir / "masks";
    fs::create_directories(mask_dir);

    const auto cases = sorted_cases(manifest);
    std::vector<Json> entries(cases.size());
    std::vector<std::optional<fs::path>> written(cases.size());
    parallel_for(cases.size(), o.workers, [&](std::size_t k) {
        const auto& rec = *cases[k];
        Json entry{{"case_id", rec.case_id}};
        try {
            std::vector<VoxelMask> stack;
            for (const auto& a : members) {
                const auto it = rec.predictions.find(a);
                if (it == rec.predictions.end()) throw Error(ErrorCode::InvalidArgument, "no prediction for " + a);
                stack.push_back(read_mask(it->second));
            }
            const auto fused = majority_vote(stack);
            const auto rel = fs::path("masks") / (safe_name(rec.case_id) + "_" + safe_name(o.name) + ".nii.gz");
            write_mask(fused, out_dir / rel);
            written[k] = fs::absolute(out_dir / rel).lexically_normal();
            entry["status"] = "ok";
            entry["output"] = rel.generic_string();
            entry["foreground_voxels"] = fused.foreground_count();
            entry["volume_ml"] = mask_volume_ml(fused);
            entry["error"] = nullptr;
        } catch (const std::exception& e) {
            entry["status"] = "failed";
            entry["output"] = nullptr;
            entry["foreground_voxels"] = nullptr;
            entry["volume_ml"] = nullptr;
            entry["error"] = e.what();
        }
        entries[k] = entry;
    });

    std::int64_t failures = 0;
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < cases.size(); ++k) index[cases[k]->case_id] = k;
    for (auto& rec : manifest.cases) {
        const auto k = index.at(rec.case_id);
        if (written[k]) rec.predictions[o.name] = *written[k];
        else ++failures;
    }
    manifest.algorithms.push_back(o.name);

    Json doc{{"schema", report::kEnsembleSchema},
             {"run", Json{{"command", "ensemble"},
                          {"manifest", o.manifest},
                          {"members", members},
                          {"name", o.name},
                          {"threshold", majority_threshold(members.size())},
                          {"case_count", cases.size()},
                          {"failure_count", failures}}},
             {"cases", entries}};
    Outputs out(out_dir);
    out.add_json("ensemble.json", doc);
    out.add("manifest.csv", report::manifest_csv(manifest));
    out.flush();
    std::cerr << "fused " << cases.size() - static_cast<std::size_t>(failures) << "/" << cases.size() << " cases\n";
    return failures > 0 ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// rank / bootstrap

struct RankOptions {
    std::string eval;
    std::string out;
    std::string algorithms;
    std::string scheme = "rank-then-aggregate";
    std::string aggregator = "median";
    std::string impute = "worst";
    double alpha = stats::kDefaultAlpha;
};

int run_rank(const RankOptions& o) {
    const auto eval = load_evaluation(o.eval, o.algorithms);
    const auto imputation = o.impute == "reject" ? Imputation::Reject : Imputation::Worst;
    const auto matrix = metric_matrix(eval, imputation);
    const auto table = compute_ranking(matrix, parse_scheme(o.scheme), parse_aggregator(o.aggregator));
    const auto sig = significance_map(matrix, o.alpha);
    const Json run{{"command", "rank"}, {"eval", o.eval}, {"impute", o.impute}, {"imputed_cells", missing_cells(eval)}};
    Outputs out(o.out);
    out.add_json("leaderboard.json", report::leaderboard_document(table, sig, run));
    out.add("leaderboard.csv", report::leaderboard_csv(table));
    out.add("significance.csv", report::significance_csv(sig));
    out.flush();
    return kExitOk;
}

struct BootstrapCliOptions {
    RankOptions rank;
    std::uint64_t seed = 0;
    int n_boot = 1000;
    int workers = 1;
};

int run_bootstrap(const BootstrapCliOptions& o) {
    if (o.n_boot < 1) throw Invalid("--n-boot must be positive");
    const auto eval = load_evaluation(o.rank.eval, o.rank.algorithms);
    const auto imputation = o.rank.impute == "reject" ? Imputation::Reject : Imputation::Worst;
    const auto matrix = metric_matrix(eval, imputation);
    BootstrapOptions bo;
    bo.scheme = parse_scheme(o.rank.scheme);
    bo.aggregator = parse_aggregator(o.rank.aggregator);
    bo.n_boot = o.n_boot;
    bo.seed = o.seed;
    bo.workers = o.workers;
    const auto result = bootstrap_ranks(matrix, bo);
    const Json run{{"command", "bootstrap"},
                   {"eval", o.rank.eval},
                   {"impute", o.rank.impute},
                   {"imputed_cells", missing_cells(eval)}};
    Outputs out(o.rank.out);
    out.add_json("bootstrap.json", report::bootstrap_document(result, run));
    out.add("bootstrap.csv", report::bootstrap_csv(result));
    out.flush();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// phenotype / territory

struct PhenotypeOptions {
    std::string manifest;
    std::string out;
    int connectivity = 26;
    int workers = 1;
    std::string atlas;
    std::string legend;
};

int run_phenotype(const PhenotypeOptions& o) {
    const auto conn = connectivity_from_int(o.connectivity);
    const auto manifest = load_manifest(o.manifest);
    const auto cases = sorted_cases(manifest);
    struct Row {
        std::optional<PatternCall> gt;
        std::string gt_error;
        std::map<std::string, std::optional<PatternCall>> pred;
        std::map<std::string, std::string> pred_error;
    };
    std::vector<Row> rows(cases.size());
    parallel_for(cases.size(), o.workers, [&](std::size_t k) {
        const auto& rec = *cases[k];
        auto& row = rows[k];
        try {
            row.gt = classify_pattern(connected_components(read_mask(rec.gt), conn));
        } catch (const std::exception& e) {
            row.gt_error = e.what();
        }
        for (const auto& a : manifest.algorithms) {
            const auto it = rec.predictions.find(a);
            if (it == rec.predictions.end()) {
                row.pred_error[a] = "no prediction listed";
                continue;
            }
            try {
                row.pred[a] = classify_pattern(connected_components(read_mask(it->second), conn));
            } catch (const std::exception& e) {
                row.pred_error[a] = e.what();
            }
        }
    });

    std::vector<std::string> classes;
    for (const auto p : kStrokePatterns) classes.emplace_back(to_string(p));
    report::Csv csv({"case_id", "source", "pattern", "rule", "lesion_count", "total_volume_ml", "largest_fraction",
                     "error"});
    Json case_docs = Json::array();
    std::int64_t failures = 0;
    std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        const auto& row = rows[k];
        const auto& id = cases[k]->case_id;
        auto emit = [&](const std::string& source, const std::optional<PatternCall>& p, const std::string& err) {
            if (p) {
                csv.row({id, source, std::string(to_string(p->label)), std::to_string(p->rule),
                         std::to_string(p->lesion_count), report::number(p->total_volume_ml),
                         report::number(p->largest_fraction), ""});
            } else {
                csv.row({id, source, "", "", "", "", "", err});
            }
        };
        Json entry{{"case_id", id}};
        entry["gt"] = row.gt ? pattern_json(*row.gt) : Json(nullptr);
        entry["gt_error"] = row.gt ? Json(nullptr) : Json(row.gt_error);
        emit("gt", row.gt, row.gt_error);
        if (!row.gt) failures += static_cast<std::int64_t>(manifest.algorithms.size()) + 1;
        Json preds = Json::object();
        for (const auto& a : manifest.algorithms) {
            const auto it = row.pred.find(a);
            if (it != row.pred.end() && it->second) {
                preds[a] = Json{{"status", "ok"}, {"call", pattern_json(*it->second)}, {"error", nullptr}};
                emit(a, it->second, "");
                if (row.gt) {
                    pairs[a].first.emplace_back(to_string(row.gt->label));
                    pairs[a].second.emplace_back(to_string(it->second->label));
                }
            } else {
                const auto& err = row.pred_error.at(a);
                preds[a] = Json{{"status", "failed"}, {"call", nullptr}, {"error", err}};
                emit(a, std::nullopt, err);
                if (row.gt) ++failures;
            }
        }
        entry["predictions"] = preds;
        case_docs.push_back(entry);
    }

    Json reports = Json::object();
    report::Csv class_csv({"algorithm", "class", "support", "precision", "recall", "f1"});
    for (const auto& a : manifest.algorithms) {
        const auto it = pairs.find(a);
        if (it == pairs.end()) {
            reports[a] = nullptr;
            continue;
        }
        const auto r = classification_report(it->second.first, it->second.second, classes);
        reports[a] = report::to_json(r);
        classification_csv_rows(class_csv, a, r);
    }
    Json doc{{"schema", report::kPhenotypeSchema},
             {"run", Json{{"command", "phenotype"},
                          {"manifest", o.manifest},
                          {"connectivity", o.connectivity},
                          {"algorithms", manifest.algorithms},
                          {"case_count", cases.size()},
                          {"failure_count", failures}}},
             {"cases", case_docs},
             {"classification", reports}};
    Outputs out(o.out);
    out.add_json("phenotype.json", doc);
    out.add("phenotype.csv", csv.str());
    out.add("phenotype_classification.csv", class_csv.str());
    out.flush();
    return failures > 0 ? kExitPartial : kExitOk;
}

int run_territory(const PhenotypeOptions& o) {
    const auto conn = connectivity_from_int(o.connectivity);
    if (o.legend.empty()) throw Invalid("--legend is required");
    const AtlasSource atlas(o.atlas, o.legend);
    const auto manifest = load_manifest(o.manifest);
    if (o.atlas.empty()) {
        for (const auto& c : manifest.cases) {
            if (!c.atlas) throw Invalid("case " + c.case_id + " has no atlas column and no --atlas was given");
        }
    }
    const auto cases = sorted_cases(manifest);
    struct Row {
        std::optional<TerritoryAssignment> gt;
        std::string gt_error;
        std::map<std::string, std::optional<TerritoryAssignment>> pred;
        std::map<std::string, std::string> pred_error;
        bool pred_no_load_only = true;
    };
    std::vector<Row> rows(cases.size());
    parallel_for(cases.size(), o.workers, [&](std::size_t k) {
        const auto& rec = *cases[k];
        auto& row = rows[k];
        std::optional<TerritoryAtlas> a;
        try {
            a = atlas.for_case(rec);
            row.gt = territory_assignment(connected_components(read_mask(rec.gt), conn), *a);
        } catch (const std::exception& e) {
            row.gt_error = e.what();
        }
        for (const auto& algo : manifest.algorithms) {
            const auto it = rec.predictions.find(algo);
            if (it == rec.predictions.end()) {
                row.pred_error[algo] = "no prediction listed";
                continue;
            }
            if (!a) {
                row.pred_error[algo] = "atlas unavailable";
                continue;
            }
            try {
                row.pred[algo] = territory_assignment(connected_components(read_mask(it->second), conn), *a);
            } catch (const Error& e) {
                row.pred_error[algo] = e.code() == ErrorCode::NoLesionLoad ? "none" : e.what();
            } catch (const std::exception& e) {
                row.pred_error[algo] = e.what();
            }
        }
    });

    std::vector<std::string> classes;
    for (const auto t : kTerritories) classes.emplace_back(to_string(t));
    classes.emplace_back("none");
    report::Csv csv({"case_id", "source", "territory", "tie", "MCA_ml", "ACA_ml", "PCA_ml", "Cerebellum_ml",
                     "PonsMedulla_ml", "error"});
    Json case_docs = Json::array();
    std::vector<std::string> warnings;
    std::int64_t failures = 0;
    std::map<std::string, std::pair<std::vector<std::string>, std::vector<std::string>>> pairs;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        const auto& row = rows[k];
        const auto& id = cases[k]->case_id;
        auto emit = [&](const std::string& source, const std::optional<TerritoryAssignment>& t, const std::string& err) {
            if (t) {
                std::vector<std::string> cells{id, source, std::string(to_string(t->territory)), t->tie ? "true" : "false"};
                for (const auto terr : kTerritories) cells.push_back(report::number(t->load(terr)));
                cells.push_back("");
                csv.row(std::move(cells));
            } else {
                csv.row({id, source, err == "none" ? "none" : "", "", "", "", "", "", "", err == "none" ? "" : err});
            }
        };
        Json entry{{"case_id", id}};
        entry["gt"] = row.gt ? territory_json(*row.gt) : Json(nullptr);
        entry["gt_error"] = row.gt ? Json(nullptr) : Json(row.gt_error);
        emit("gt", row.gt, row.gt_error);
        if (!row.gt) warnings.push_back(id + ": excluded from classification (" + row.gt_error + ")");
        Json preds = Json::object();
        for (const auto& a : manifest.algorithms) {
            const auto it = row.pred.find(a);
            if (it != row.pred.end() && it->second) {
                preds[a] = Json{{"status", "ok"}, {"assignment", territory_json(*it->second)}, {"error", nullptr}};
                emit(a, it->second, "");
                if (row.gt) {
                    pairs[a].first.emplace_back(to_string(row.gt->territory));
                    pairs[a].second.emplace_back(to_string(it->second->territory));
                }
                continue;
            }
            const auto& err = row.pred_error.at(a);
            emit(a, std::nullopt, err);
            if (err == "none") {
                preds[a] = Json{{"status", "ok"}, {"assignment", nullptr}, {"error", nullptr}};
                if (row.gt) {
                    pairs[a].first.emplace_back(to_string(row.gt->territory));
                    pairs[a].second.emplace_back("none");
                }
            } else {
                preds[a] = Json{{"status", "failed"}, {"assignment", nullptr}, {"error", err}};
                ++failures;
            }
        }
        entry["predictions"] = preds;
        case_docs.push_back(entry);
    }

    Json reports = Json::object();
    report::Csv class_csv({"algorithm", "class", "support", "precision", "recall", "f1"});
    for (const auto& a : manifest.algorithms) {
        const auto it = pairs.find(a);
        if (it == pairs.end()) {
            reports[a] = nullptr;
            continue;
        }
        const auto r = classification_report(it->second.first, it->second.second, classes);
        reports[a] = report::to_json(r);
        classification_csv_rows(class_csv, a, r);
    }
    Json doc{{"schema", report::kTerritorySchema},
             {"run", Json{{"command", "territory"},
                          {"manifest", o.manifest},
                          {"connectivity", o.connectivity},
                          {"algorithms", manifest.algorithms},
                          {"case_count", cases.size()},
                          {"failure_count", failures}}},
             {"warnings", warnings},
             {"cases", case_docs},
             {"classification", reports}};
    Outputs out(o.out);
    out.add_json("territory.json", doc);
    out.add("territory.csv", csv.str());
    out.add("territory_classification.csv", class_csv.str());
    out.flush();
    return failures > 0 ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// agree

struct AgreeOptions {
    std::string eval;
    std::string out;
    std::string against = "gt_volume";
    std::string algorithms;
};

int run_agree(const AgreeOptions& o) {
    const auto eval = load_evaluation(o.eval, o.algorithms);
    const bool volumes = o.against == "gt_volume";
    if (!volumes) {
        const bool present = std::any_of(eval.cases.begin(), eval.cases.end(),
                                         [&](const auto& c) { return c.clinical.contains(o.against); });
        if (!present) throw Invalid("no case carries the column '" + o.against + "'");
    }

    // source -> group -> (reference, value)
    struct Series {
        std::vector<double> ref, val;
        std::vector<std::string> ids;
    };
    std::vector<std::string> sources = eval.algorithms;
    if (!volumes) sources.insert(sources.begin(), "gt");
    std::map<std::string, std::map<std::string, Series>> series;
    report::Csv points({"case_id", "source", "size_bin", "reference", "value", "difference", "mean"});
    for (const auto& c : eval.cases) {
        if (!c.gt_volume_ml) continue;
        std::optional<double> ref = volumes ? c.gt_volume_ml : std::nullopt;
        if (!volumes) {
            const auto it = c.clinical.find(o.against);
            if (it == c.clinical.end()) continue;
            ref = it->second;
        }
        const std::string bin(to_string(*c.bin));
        for (const auto& s : sources) {
            std::optional<double> v;
            if (s == "gt" && !volumes) {
                v = c.gt_volume_ml;
            } else if (const auto& r = c.algorithms.at(s); r.metrics) {
                v = r.metrics->pred_volume_ml;
            }
            if (!v) continue;
            for (const auto& g : {std::string("all"), bin}) {
                auto& se = series[s][g];
                se.ref.push_back(*ref);
                se.val.push_back(*v);
                se.ids.push_back(c.case_id);
            }
            points.row({c.case_id, s, bin, report::number(*ref), report::number(*v), report::number(*ref - *v),
                        report::number((*ref + *v) / 2.0)});
        }
    }

    report::Csv summary({"source", "group", "n", "pearson_r", "mean_diff", "sd_diff", "loa_low", "loa_high"});
    Json results = Json::object();
    std::vector<std::string> groups{"all"};
    for (const auto b : kSizeBins) groups.emplace_back(to_string(b));
    for (const auto& s : sources) {
        Json per = Json::array();
        for (const auto& g : groups) {
            const auto it = series[s].find(g);
            if (it == series[s].end()) continue;
            auto va = volume_agreement(g, it->second.ref, it->second.val);
            if (!volumes) va.bland_altman.reset();
            per.push_back(report::to_json(va));
            const auto& ba = va.bland_altman;
            summary.row({s, g, std::to_string(va.n), va.pearson_r ? report::number(*va.pearson_r) : "",
                         ba ? report::number(ba->mean_diff) : "", ba ? report::number(ba->sd_diff) : "",
                         ba ? report::number(ba->loa_low) : "", ba ? report::number(ba->loa_high) : ""});
        }
        results[s] = per;
    }
    Json doc{{"schema", report::kAgreementSchema},
             {"run", Json{{"command", "agree"}, {"eval", o.eval}, {"against", o.against}}},
             {"results", results}};
    Outputs out(o.out);
    out.add_json("agreement.json", doc);
    out.add("agreement.csv", summary.str());
    out.add("agreement_points.csv", points.str());
    out.flush();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// turing

struct TuringExportOptions {
    std::string manifest;
    std::string algorithm;
    std::string out;
    std::uint64_t seed = 0;
    int workers = 1;
};

int run_turing_export(const TuringExportOptions& o) {
    const auto manifest = load_manifest(o.manifest);
    if (std::find(manifest.algorithms.begin(), manifest.algorithms.end(), o.algorithm) == manifest.algorithms.end()) {
        throw Invalid("unknown algorithm '" + o.algorithm + "'");
    }
    const auto cases = sorted_cases(manifest);
    const fs::path out_dir(o.out);
    const fs::path render_dir = out_dir / "renders";
    fs::create_directories(render_dir);

    // names drawn up front so they do not depend on scheduling
    std::mt19937_64 rng(o.seed);
    std::set<std::string> taken;
    std::vector<std::array<std::string, 6>> names(cases.size());
    for (auto& n : names) {
        for (auto& s : n) {
            do {
                std::ostringstream hex;
                hex << std::hex << std::setw(16) << std::setfill('0') << rng();
                s = hex.str() + ".png";
            } while (!taken.insert(s).second);
        }
    }

    std::vector<std::optional<turing::PoolCase>> pool(cases.size());
    std::vector<std::string> errors(cases.size());
    parallel_for(cases.size(), o.workers, [&](std::size_t k) {
        const auto& rec = *cases[k];
        try {
            if (!rec.expert) throw Error(ErrorCode::InvalidArgument, "no expert annotation listed");
            const auto it = rec.predictions.find(o.algorithm);
            if (it == rec.predictions.end()) throw Error(ErrorCode::InvalidArgument, "no prediction listed");
            const auto expert = read_mask(*rec.expert);
            const auto algo = read_mask(it->second);
            require_same_grid(expert.grid(), algo.grid(), "expert and algorithm masks");
            std::vector<double> background;
            if (rec.image) {
                const auto image = read_volume(*rec.image);
                require_same_grid(image.header.grid(), expert.grid(), "image and masks");
                background = image.values();
            }
            const auto window = render::intensity_window(background);
            const auto slices = render::choose_slices(expert, algo);
            turing::PoolCase pc;
            pc.case_id = rec.case_id;
            const std::array<std::pair<render::Plane, std::int64_t>, 3> views{
                std::pair{render::Plane::Axial, slices.axial[0]}, std::pair{render::Plane::Axial, slices.axial[1]},
                std::pair{render::Plane::Sagittal, slices.sagittal}};
            for (std::size_t v = 0; v < 3; ++v) {
                const auto& [plane, index] = views[v];
                render::write_png(render::render_slice(expert.grid(), background, window, expert, plane, index),
                                  render_dir / names[k][v]);
                render::write_png(render::render_slice(algo.grid(), background, window, algo, plane, index),
                                  render_dir / names[k][v + 3]);
                pc.expert[v] = names[k][v];
                pc.algorithm[v] = names[k][v + 3];
            }
            pool[k] = pc;
        } catch (const std::exception& e) {
            errors[k] = e.what();
        }
    });

    std::vector<turing::PoolCase> usable;
    Json skipped = Json::array();
    for (std::size_t k = 0; k < cases.size(); ++k) {
        if (pool[k]) usable.push_back(*pool[k]);
        else skipped.push_back(Json{{"case_id", cases[k]->case_id}, {"error", errors[k]}});
    }
    auto pool_doc = turing::to_json(usable);
    pool_doc["run"] = Json{{"command", "turing export"},
                           {"manifest", o.manifest},
                           {"algorithm", o.algorithm},
                           {"seed", o.seed}};
    pool_doc["skipped"] = skipped;
    Outputs out(out_dir);
    out.add_json("pool.json", pool_doc);
    out.flush();
    std::cerr << "rendered " << usable.size() << "/" << cases.size() << " cases\n";
    return skipped.empty() ? kExitOk : kExitPartial;
}

int run_turing_report(const std::string& data_dir, const std::string& out_dir) {
    if (!fs::exists(fs::path(data_dir) / "journal.jsonl") && !fs::exists(fs::path(data_dir) / "snapshot.json")) {
        throw Invalid("no rating journal in " + data_dir);
    }
    const turing::Store store(data_dir, 0);
    const auto sessions = store.sessions();
    const auto r = turing::turing_report(sessions);
    report::Csv scores({"session_id", "rater_id", "item_id", "case_id", "source", "completeness", "correctness"});
    for (const auto& s : sessions) {
        if (!s.complete()) continue;
        for (const auto& it : s.items) {
            const auto& sc = s.scores.at(it.item_id);
            scores.row({s.session_id, s.rater_id, it.item_id, it.case_id, std::string(turing::to_string(it.source)),
                        std::to_string(sc.completeness), std::to_string(sc.correctness)});
        }
    }
    Outputs out(out_dir);
    out.add_json("turing_report.json", turing::to_json(r));
    out.add("turing_scores.csv", scores.str());
    out.flush();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evaluation, ensembling, ranking and phenotyping of stroke lesion segmentations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "strokeval 1.0");

    const auto conn_check = CLI::IsMember({6, 18, 26});
    const auto scheme_check = CLI::IsMember({"rank-then-aggregate", "aggregate-then-rank"});
    const auto aggregator_check = CLI::IsMember({"median", "mean"});
    const auto impute_check = CLI::IsMember({"worst", "reject"});

    EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "per-case metrics and summaries for every algorithm");
    eval_cmd->add_option("--manifest", eval.manifest, "cohort manifest (CSV or JSON)")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", eval.out, "output directory")->required();
    eval_cmd->add_option("--connectivity", eval.connectivity, "lesion connectivity")->check(conn_check)->capture_default_str();
    eval_cmd->add_option("--workers", eval.workers, "worker threads")->check(CLI::Range(1, 256))->capture_default_str();
    eval_cmd->add_option("--group-by", eval.group_by,
                         "comma list of center, phase, seen_center, size_bin, pattern, territory");
    eval_cmd->add_option("--atlas", eval.atlas, "territory label map for --group-by territory")->check(CLI::ExistingFile);
    eval_cmd->add_option("--legend", eval.legend, "territory legend JSON")->check(CLI::ExistingFile);
    eval_cmd->add_option("--alpha", eval.alpha, "FDR level for subgroup tests")->check(CLI::Range(0.0, 1.0))->capture_default_str();

    EnsembleOptions ens;
    auto* ens_cmd = app.add_subcommand("ensemble", "majority-vote fusion of several algorithms");
    ens_cmd->add_option("--manifest", ens.manifest)->required()->check(CLI::ExistingFile);
    ens_cmd->add_option("--out", ens.out)->required();
    ens_cmd->add_option("--algorithms", ens.algorithms, "comma list of members (default: all)");
    ens_cmd->add_option("--name", ens.name, "algorithm name of the fused masks")->capture_default_str();
    ens_cmd->add_option("--workers", ens.workers)->check(CLI::Range(1, 256))->capture_default_str();

    RankOptions rank;
    auto add_rank_options = [&](CLI::App* cmd, RankOptions& r) {
        cmd->add_option("--eval", r.eval, "eval.json from the eval command")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", r.out)->required();
        cmd->add_option("--algorithms", r.algorithms, "comma list of teams (default: all)");
        cmd->add_option("--scheme", r.scheme)->check(scheme_check)->capture_default_str();
        cmd->add_option("--aggregator", r.aggregator, "aggregate-then-rank statistic")->check(aggregator_check)->capture_default_str();
        cmd->add_option("--impute", r.impute, "failed cases: worst observed value or reject")->check(impute_check)->capture_default_str();
    };
    auto* rank_cmd = app.add_subcommand("rank", "leaderboard and pairwise significance");
    add_rank_options(rank_cmd, rank);
    rank_cmd->add_option("--alpha", rank.alpha)->check(CLI::Range(0.0, 1.0))->capture_default_str();

    BootstrapCliOptions boot;
    auto* boot_cmd = app.add_subcommand("bootstrap", "rank stability over case resamples");
    add_rank_options(boot_cmd, boot.rank);
    boot_cmd->add_option("--seed", boot.seed, "random seed")->required();
    boot_cmd->add_option("--n-boot", boot.n_boot)->check(CLI::Range(1, 1000000))->capture_default_str();
    boot_cmd->add_option("--workers", boot.workers)->check(CLI::Range(1, 256))->capture_default_str();

    PhenotypeOptions pheno;
    auto* pheno_cmd = app.add_subcommand("phenotype", "stroke pattern of ground truth and predictions");
    pheno_cmd->add_option("--manifest", pheno.manifest)->required()->check(CLI::ExistingFile);
    pheno_cmd->add_option("--out", pheno.out)->required();
    pheno_cmd->add_option("--connectivity", pheno.connectivity)->check(conn_check)->capture_default_str();
    pheno_cmd->add_option("--workers", pheno.workers)->check(CLI::Range(1, 256))->capture_default_str();

    PhenotypeOptions terr;
    auto* terr_cmd = app.add_subcommand("territory", "vascular territory of ground truth and predictions");
    terr_cmd->add_option("--manifest", terr.manifest)->required()->check(CLI::ExistingFile);
    terr_cmd->add_option("--out", terr.out)->required();
    terr_cmd->add_option("--atlas", terr.atlas, "label map shared by all cases")->check(CLI::ExistingFile);
    terr_cmd->add_option("--legend", terr.legend, "label to territory JSON")->required()->check(CLI::ExistingFile);
    terr_cmd->add_option("--connectivity", terr.connectivity)->check(conn_check)->capture_default_str();
    terr_cmd->add_option("--workers", terr.workers)->check(CLI::Range(1, 256))->capture_default_str();

    AgreeOptions agree;
    auto* agree_cmd = app.add_subcommand("agree", "Pearson and Bland-Altman agreement of lesion volumes");
    agree_cmd->add_option("--eval", agree.eval)->required()->check(CLI::ExistingFile);
    agree_cmd->add_option("--out", agree.out)->required();
    agree_cmd->add_option("--against", agree.against, "gt_volume or a numeric manifest column")->capture_default_str();
    agree_cmd->add_option("--algorithms", agree.algorithms);

    auto* turing_cmd = app.add_subcommand("turing", "rating study helpers");
    turing_cmd->require_subcommand(1);
    TuringExportOptions texp;
    auto* export_cmd = turing_cmd->add_subcommand("export", "render expert and algorithm overlays for the rating pool");
    export_cmd->add_option("--manifest", texp.manifest)->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--algorithm", texp.algorithm, "algorithm shown against the expert")->required();
    export_cmd->add_option("--out", texp.out)->required();
    export_cmd->add_option("--seed", texp.seed, "seed for rendering file names")->required();
    export_cmd->add_option("--workers", texp.workers)->check(CLI::Range(1, 256))->capture_default_str();
    std::string report_data, report_out;
    auto* report_cmd = turing_cmd->add_subcommand("report", "offline report from a rating journal");
    report_cmd->add_option("--data-dir", report_data)->required()->check(CLI::ExistingDirectory);
    report_cmd->add_option("--out", report_out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*eval_cmd) return run_eval(eval);
        if (*ens_cmd) return run_ensemble(ens);
        if (*rank_cmd) return run_rank(rank);
        if (*boot_cmd) return run_bootstrap(boot);
        if (*pheno_cmd) return run_phenotype(pheno);
        if (*terr_cmd) return run_territory(terr);
        if (*agree_cmd) return run_agree(agree);
        if (*export_cmd) return run_turing_export(texp);
        if (*report_cmd) return run_turing_report(report_data, report_out);
    } catch (const Invalid& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::Io ? kExitInternal : kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
